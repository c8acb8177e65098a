//! Versioned binary model container.
//!
//! ```text
//! "NGMD" | version u32 | kind u8 | scheme u8 | payload_len u64 | payload | crc32 u32
//! ```
//!
//! All integers and floats are little-endian. The CRC-32 (IEEE) covers every
//! byte before it. Payloads start with the feature width (u32) followed by
//! the kind-specific body:
//!
//! * SVM: C, gamma, bias, Platt A, Platt B (f64 each), support vector count
//!   (u32), then per vector its coefficient (f64) and `width` f32 values.
//! * Forest: tree count (u32), then each tree.
//! * Boost: stage count (u32), then per stage alpha (f64) and the tree.
//!
//! A tree is a node count (u32) followed by nodes: tag 0 = leaf
//! (label u8, samples u32), tag 1 = split (feature u32, threshold f64,
//! left u32, right u32, samples u32). Labels: 0 neutral, 1 non-neutral.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::boost::BoostModel;
use super::forest::ForestModel;
use super::svm::SvmModel;
use super::tree::{DecisionTree, Node};
use super::{ClassifierKind, Model, TrainedClassifier};
use crate::codec::ComboScheme;
use crate::dataset::BinaryLabel;

pub const MODEL_MAGIC: [u8; 4] = *b"NGMD";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 1 + 8;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported model format version {0}")]
    VersionMismatch(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown classifier kind {0}")]
    UnknownKind(u8),
    #[error("unknown feature combination code {0}")]
    UnknownScheme(u8),
    #[error("model file holds a {found} classifier, expected {expected}")]
    KindMismatch {
        expected: ClassifierKind,
        found: ClassifierKind,
    },
    #[error("model file length {found} does not match header ({expected})")]
    Length { expected: u64, found: u64 },
    #[error("malformed {kind} payload: {message}")]
    Payload { kind: ClassifierKind, message: String },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model component exceeds u32 range");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn tree(&mut self, tree: &DecisionTree) {
        self.u32(tree.nodes.len());
        for node in &tree.nodes {
            match *node {
                Node::Leaf { label, samples } => {
                    self.u8(0);
                    self.u8(label_code(label));
                    self.u32(samples as usize);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    samples,
                } => {
                    self.u8(1);
                    self.u32(feature as usize);
                    self.f64(threshold);
                    self.u32(left as usize);
                    self.u32(right as usize);
                    self.u32(samples as usize);
                }
            }
        }
    }
}

fn label_code(label: BinaryLabel) -> u8 {
    match label {
        BinaryLabel::Neutral => 0,
        BinaryLabel::NonNeutral => 1,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("payload ends early at byte {}", self.at))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    /// Count of items of at least `min_item_bytes` each, bounded by what is
    /// left in the buffer so corrupt counts cannot trigger huge allocations.
    fn count(&mut self, min_item_bytes: usize) -> Result<usize, String> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_bytes) > self.buf.len() - self.at {
            return Err(format!("count {n} exceeds remaining payload"));
        }
        Ok(n)
    }

    fn tree(&mut self, dim: usize) -> Result<DecisionTree, String> {
        let n = self.count(6)?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let node = match self.u8()? {
                0 => {
                    let label = match self.u8()? {
                        0 => BinaryLabel::Neutral,
                        1 => BinaryLabel::NonNeutral,
                        other => return Err(format!("bad leaf label {other}")),
                    };
                    Node::Leaf {
                        label,
                        samples: self.u32()?,
                    }
                }
                1 => Node::Split {
                    feature: self.u32()?,
                    threshold: self.f64()?,
                    left: self.u32()?,
                    right: self.u32()?,
                    samples: self.u32()?,
                },
                other => return Err(format!("bad node tag {other}")),
            };
            nodes.push(node);
        }
        let tree = DecisionTree { nodes };
        tree.check_structure(dim)?;
        Ok(tree)
    }
}

pub fn encode_model(model: &TrainedClassifier) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u32(model.dim());
    match model.model() {
        Model::Svm(m) => {
            for v in [m.c, m.gamma, m.bias, m.platt_a, m.platt_b] {
                w.f64(v);
            }
            w.u32(m.support_vectors.len());
            for (sv, &coef) in m.support_vectors.iter().zip(&m.coefficients) {
                w.f64(coef);
                for &x in sv {
                    w.f32(x);
                }
            }
        }
        Model::Forest(m) => {
            w.u32(m.trees.len());
            for t in &m.trees {
                w.tree(t);
            }
        }
        Model::Boost(m) => {
            w.u32(m.stages.len());
            for (t, alpha) in &m.stages {
                w.f64(*alpha);
                w.tree(t);
            }
        }
    }
    let payload = w.0;

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4);
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.push(model.kind().code());
    out.push(model.scheme().code());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedClassifier, ModelIoError> {
    if bytes.len() < HEADER_LEN + 4 {
        if bytes.len() >= 4 && bytes[..4] != MODEL_MAGIC {
            return Err(ModelIoError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(ModelIoError::Length {
            expected: (HEADER_LEN + 4) as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::VersionMismatch(version));
    }
    let payload_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let expected = (HEADER_LEN as u64 + 4).saturating_add(payload_len);
    if bytes.len() as u64 != expected {
        return Err(ModelIoError::Length {
            expected,
            found: bytes.len() as u64,
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(ModelIoError::Checksum { stored, computed });
    }

    let kind = ClassifierKind::from_code(bytes[8]).ok_or(ModelIoError::UnknownKind(bytes[8]))?;
    let scheme = ComboScheme::from_code(bytes[9]).ok_or(ModelIoError::UnknownScheme(bytes[9]))?;
    let payload_err = |message: String| ModelIoError::Payload { kind, message };
    decode_payload(kind, &bytes[HEADER_LEN..body_end])
        .map(|(dim, model)| TrainedClassifier::new(scheme, dim, model))
        .map_err(payload_err)
}

fn decode_payload(kind: ClassifierKind, payload: &[u8]) -> Result<(usize, Model), String> {
    let mut r = Reader { buf: payload, at: 0 };
    let dim = r.u32()? as usize;
    let model = match kind {
        ClassifierKind::Svm => {
            let [c, gamma, bias, platt_a, platt_b] =
                [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
            if !(c > 0.0 && gamma > 0.0) {
                return Err(format!("C = {c}, gamma = {gamma} must be positive"));
            }
            let n = r.count(8 + 4 * dim)?;
            if n == 0 {
                return Err("no support vectors".into());
            }
            let mut support_vectors = Vec::with_capacity(n);
            let mut coefficients = Vec::with_capacity(n);
            for _ in 0..n {
                let coef = r.f64()?;
                if coef.is_nan() || coef.abs() > c {
                    return Err(format!("dual coefficient {coef} exceeds C = {c}"));
                }
                coefficients.push(coef);
                support_vectors.push((0..dim).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?);
            }
            Model::Svm(SvmModel {
                c,
                gamma,
                support_vectors,
                coefficients,
                bias,
                platt_a,
                platt_b,
            })
        }
        ClassifierKind::RandomForest => {
            let n = r.count(10)?;
            if n == 0 {
                return Err("forest has no trees".into());
            }
            let trees = (0..n).map(|_| r.tree(dim)).collect::<Result<_, _>>()?;
            Model::Forest(ForestModel { trees })
        }
        ClassifierKind::AdaBoost => {
            let n = r.count(18)?;
            let mut stages = Vec::with_capacity(n);
            for _ in 0..n {
                let alpha = r.f64()?;
                if !alpha.is_finite() {
                    return Err(format!("non-finite stage weight {alpha}"));
                }
                stages.push((r.tree(dim)?, alpha));
            }
            Model::Boost(BoostModel { stages })
        }
    };
    if r.at != payload.len() {
        return Err(format!("{} trailing bytes", payload.len() - r.at));
    }
    Ok((dim, model))
}

pub fn save_model(model: &TrainedClassifier, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedClassifier, ModelIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}

/// Loads a model and checks it is of the expected kind.
pub fn load_model_as(
    path: impl AsRef<Path>,
    expected: ClassifierKind,
) -> Result<TrainedClassifier, ModelIoError> {
    let model = load_model(path)?;
    if model.kind() != expected {
        return Err(ModelIoError::KindMismatch {
            expected,
            found: model.kind(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forest() -> TrainedClassifier {
        let tree = DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    samples: 20,
                },
                Node::Leaf {
                    label: BinaryLabel::Neutral,
                    samples: 12,
                },
                Node::Leaf {
                    label: BinaryLabel::NonNeutral,
                    samples: 8,
                },
            ],
        };
        TrainedClassifier::new(
            ComboScheme::Hse2C,
            3,
            Model::Forest(ForestModel {
                trees: vec![tree.clone(), tree],
            }),
        )
    }

    #[test]
    fn roundtrip_and_header() {
        let model = forest();
        let bytes = encode_model(&model);
        assert_eq!(&bytes[..4], b"NGMD");
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], ComboScheme::Hse2C.code());
        assert_eq!(decode_model(&bytes).unwrap(), model);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_model(&forest());
        let mut corrupt = bytes.clone();
        corrupt[HEADER_LEN + 5] ^= 0x40;
        assert!(matches!(decode_model(&corrupt), Err(ModelIoError::Checksum { .. })));

        let mut version = bytes.clone();
        version[4] = 9;
        assert!(matches!(decode_model(&version), Err(ModelIoError::VersionMismatch(9))));

        assert!(matches!(decode_model(&bytes[..bytes.len() - 1]), Err(ModelIoError::Length { .. })));
        assert!(matches!(decode_model(b"FEAT0000000000000000000"), Err(ModelIoError::BadMagic(_))));
    }

    #[test]
    fn payload_kind_mismatch_is_rejected() {
        // Relabel a forest payload as an SVM and fix up the checksum.
        let mut bytes = encode_model(&forest());
        bytes[8] = ClassifierKind::Svm.code();
        let end = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..end]);
        bytes[end..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_model(&bytes), Err(ModelIoError::Payload { kind: ClassifierKind::Svm, .. })));
    }
}
