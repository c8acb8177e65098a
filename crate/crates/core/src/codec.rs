//! Feature matrix container, manifest, and feature combinations.
//!
//! A `.feat` file is a 16-byte header followed by row-major little-endian
//! `f32` data:
//!
//! ```text
//! offset  size  field
//! 0       4     magic  "FEAT"
//! 4       4     version (u32, = 1)
//! 8       4     rows    (u32)
//! 12      4     cols    (u32)
//! 16      4*r*c data
//! ```
//!
//! A feature directory holds `hse1.feat`, `hse2.feat`, `softmax1.feat` and
//! `softmax2.feat`, row-aligned with a manifest. Each manifest line is a
//! tab-separated list of `key=value` fields with the keys `row`, `sample_id`,
//! `subject_id`, `dataset_name` and `expression_label`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub const FEAT_MAGIC: [u8; 4] = *b"FEAT";
pub const FEAT_VERSION: u32 = 1;
pub const FEAT_HEADER_LEN: usize = 16;

pub const HSE1_DIM: usize = 1280;
pub const HSE2_DIM: usize = 1408;
pub const SOFTMAX_DIM: usize = 8;
const SOFTMAX_SUM_TOLERANCE: f64 = 1e-3;

pub const HSE1_FILE: &str = "hse1.feat";
pub const HSE2_FILE: &str = "hse2.feat";
pub const SOFTMAX1_FILE: &str = "softmax1.feat";
pub const SOFTMAX2_FILE: &str = "softmax2.feat";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"FEAT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated or oversized payload: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("matrix dimensions {rows}x{cols} do not fit the container")]
    DimensionOverflow { rows: usize, cols: usize },
    #[error("matrix data has {found} values, expected {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, found: usize },
    #[error("{file} has {found} rows, expected {expected}")]
    RowCountMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("{file} has {found} columns, expected {expected}")]
    ColumnMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("manifest line {line}: row index {row} out of range for {rows} matrix rows")]
    RowOutOfRange { line: usize, row: usize, rows: usize },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("unknown expression label {0:?}")]
    UnknownExpression(String),
    #[error("duplicate sample_id {0:?}")]
    DuplicateSample(String),
    #[error("sample {sample_id}: {message}")]
    InvalidRecord { sample_id: String, message: String },
    #[error("{scheme} vector needs {expected} values, got {found}")]
    ComboLength {
        scheme: ComboScheme,
        expected: usize,
        found: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodecError + '_ {
    move |source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dense row-major `f32` matrix as stored in a `.feat` file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, CodecError> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(CodecError::ShapeMismatch {
                rows,
                cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally long rows. `cols` is needed for the
    /// zero-row case.
    pub fn from_rows(cols: usize, rows: &[Vec<f32>]) -> Result<Self, CodecError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(CodecError::ShapeMismatch {
                    rows: rows.len(),
                    cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

pub fn encode_matrix(matrix: &FeatureMatrix) -> Result<Vec<u8>, CodecError> {
    let overflow = || CodecError::DimensionOverflow {
        rows: matrix.rows,
        cols: matrix.cols,
    };
    let rows = u32::try_from(matrix.rows).map_err(|_| overflow())?;
    let cols = u32::try_from(matrix.cols).map_err(|_| overflow())?;
    let len = matrix
        .data
        .len()
        .checked_mul(4)
        .and_then(|n| n.checked_add(FEAT_HEADER_LEN))
        .ok_or_else(overflow)?;

    let mut buf = Vec::with_capacity(len);
    buf.extend_from_slice(&FEAT_MAGIC);
    buf.extend_from_slice(&FEAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<FeatureMatrix, CodecError> {
    if bytes.len() < FEAT_HEADER_LEN {
        // Too short to even hold a header; report the magic if it is there.
        if bytes.len() >= 4 && bytes[..4] != FEAT_MAGIC {
            return Err(CodecError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(CodecError::LengthMismatch {
            expected: FEAT_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FEAT_MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let version = word(4);
    if version != FEAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let rows = word(8) as u64;
    let cols = word(12) as u64;
    // u32 x u32 x 4 can exceed u64.
    let expected = FEAT_HEADER_LEN as u128 + 4 * rows as u128 * cols as u128;
    let Ok(expected) = u64::try_from(expected) else {
        return Err(CodecError::DimensionOverflow {
            rows: rows as usize,
            cols: cols as usize,
        });
    };
    if bytes.len() as u64 != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let data = bytes[FEAT_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureMatrix {
        rows: rows as usize,
        cols: cols as usize,
        data,
    })
}

pub fn write_matrix(path: impl AsRef<Path>, matrix: &FeatureMatrix) -> Result<(), CodecError> {
    let path = path.as_ref();
    let bytes = encode_matrix(matrix)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix, CodecError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_matrix(&bytes)
}

/// Eight expression classes of the upstream recognizer, plus a catch-all for
/// datasets that only annotate neutral vs. non-neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expression {
    Anger,
    Contempt,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
    Surprise,
    NonNeutralUnspecified,
}

impl Expression {
    pub const ALL: [Expression; 9] = [
        Expression::Anger,
        Expression::Contempt,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happiness,
        Expression::Neutral,
        Expression::Sadness,
        Expression::Surprise,
        Expression::NonNeutralUnspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Expression::Anger => "anger",
            Expression::Contempt => "contempt",
            Expression::Disgust => "disgust",
            Expression::Fear => "fear",
            Expression::Happiness => "happiness",
            Expression::Neutral => "neutral",
            Expression::Sadness => "sadness",
            Expression::Surprise => "surprise",
            Expression::NonNeutralUnspecified => "non_neutral_unspecified",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Expression {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| CodecError::UnknownExpression(s.to_string()))
    }
}

/// Identity and annotation of one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub subject_id: String,
    pub dataset_name: String,
    pub expression: Expression,
}

/// One sample's embeddings. Constructed only through [`FeatureRecord::new`],
/// so the vector lengths and softmax normalization always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    meta: SampleMeta,
    hse1: Vec<f32>,
    hse2: Vec<f32>,
    softmax1: Vec<f32>,
    softmax2: Vec<f32>,
}

impl FeatureRecord {
    pub fn new(
        meta: SampleMeta,
        hse1: Vec<f32>,
        hse2: Vec<f32>,
        softmax1: Vec<f32>,
        softmax2: Vec<f32>,
    ) -> Result<Self, CodecError> {
        let invalid = |message: String| CodecError::InvalidRecord {
            sample_id: meta.sample_id.clone(),
            message,
        };
        for (name, v, dim) in [
            ("hse1", &hse1, HSE1_DIM),
            ("hse2", &hse2, HSE2_DIM),
            ("softmax1", &softmax1, SOFTMAX_DIM),
            ("softmax2", &softmax2, SOFTMAX_DIM),
        ] {
            if v.len() != dim {
                return Err(invalid(format!("{name} has {} values, expected {dim}", v.len())));
            }
        }
        for (name, v) in [("softmax1", &softmax1), ("softmax2", &softmax2)] {
            if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(invalid(format!("{name} entry {x} outside [0, 1]")));
            }
            let sum: f64 = v.iter().map(|&x| x as f64).sum();
            if (sum - 1.0).abs() > SOFTMAX_SUM_TOLERANCE {
                return Err(invalid(format!("{name} sums to {sum}")));
            }
        }
        Ok(Self {
            meta,
            hse1,
            hse2,
            softmax1,
            softmax2,
        })
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn sample_id(&self) -> &str {
        &self.meta.sample_id
    }

    pub fn subject_id(&self) -> &str {
        &self.meta.subject_id
    }

    pub fn expression(&self) -> Expression {
        self.meta.expression
    }

    pub fn hse1(&self) -> &[f32] {
        &self.hse1
    }

    pub fn hse2(&self) -> &[f32] {
        &self.hse2
    }

    pub fn softmax1(&self) -> &[f32] {
        &self.softmax1
    }

    pub fn softmax2(&self) -> &[f32] {
        &self.softmax2
    }
}

/// Which embeddings are concatenated into a classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComboScheme {
    Hse1,
    Hse2,
    Hse1C,
    Hse2C,
    Hse12,
    Hse12C,
}

impl ComboScheme {
    pub const ALL: [ComboScheme; 6] = [
        ComboScheme::Hse1,
        ComboScheme::Hse2,
        ComboScheme::Hse1C,
        ComboScheme::Hse2C,
        ComboScheme::Hse12,
        ComboScheme::Hse12C,
    ];

    pub fn dim(self) -> usize {
        match self {
            ComboScheme::Hse1 => HSE1_DIM,
            ComboScheme::Hse2 => HSE2_DIM,
            ComboScheme::Hse1C => HSE1_DIM + SOFTMAX_DIM,
            ComboScheme::Hse2C => HSE2_DIM + SOFTMAX_DIM,
            ComboScheme::Hse12 => HSE1_DIM + HSE2_DIM,
            ComboScheme::Hse12C => HSE1_DIM + HSE2_DIM + 2 * SOFTMAX_DIM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComboScheme::Hse1 => "hse1",
            ComboScheme::Hse2 => "hse2",
            ComboScheme::Hse1C => "hse1c",
            ComboScheme::Hse2C => "hse2c",
            ComboScheme::Hse12 => "hse12",
            ComboScheme::Hse12C => "hse12c",
        }
    }

    /// Stable one-byte code used in the model container.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        ComboScheme::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ComboScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComboScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComboScheme::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown feature combination {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComboVector {
    scheme: ComboScheme,
    values: Vec<f32>,
}

impl ComboVector {
    pub fn new(scheme: ComboScheme, values: Vec<f32>) -> Result<Self, CodecError> {
        if values.len() != scheme.dim() {
            return Err(CodecError::ComboLength {
                scheme,
                expected: scheme.dim(),
                found: values.len(),
            });
        }
        Ok(Self { scheme, values })
    }

    pub fn scheme(&self) -> ComboScheme {
        self.scheme
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Concatenates a record's embeddings. Backbone vectors come before softmax
/// vectors, HSE-1 before HSE-2.
pub fn combine(record: &FeatureRecord, scheme: ComboScheme) -> ComboVector {
    let parts: &[&[f32]] = match scheme {
        ComboScheme::Hse1 => &[&record.hse1],
        ComboScheme::Hse2 => &[&record.hse2],
        ComboScheme::Hse1C => &[&record.hse1, &record.softmax1],
        ComboScheme::Hse2C => &[&record.hse2, &record.softmax2],
        ComboScheme::Hse12 => &[&record.hse1, &record.hse2],
        ComboScheme::Hse12C => &[&record.hse1, &record.hse2, &record.softmax1, &record.softmax2],
    };
    let values = parts.concat();
    debug_assert_eq!(values.len(), scheme.dim());
    ComboVector { scheme, values }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub row: usize,
    pub meta: SampleMeta,
}

const MANIFEST_KEYS: [&str; 5] = ["row", "sample_id", "subject_id", "dataset_name", "expression_label"];

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, CodecError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CodecError::Manifest {
            line: line_no,
            message,
        };
        let mut fields: [Option<&str>; 5] = [None; 5];
        for field in line.split('\t') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(format!("field {field:?} is not key=value")))?;
            let slot = MANIFEST_KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| err(format!("unknown key {key:?}")))?;
            if fields[slot].replace(value).is_some() {
                return Err(err(format!("repeated key {key:?}")));
            }
        }
        let [row, sample_id, subject_id, dataset_name, label] = fields;
        let missing = |k: &str| err(format!("missing key {k:?}"));
        let row = row.ok_or_else(|| missing("row"))?;
        let row = row
            .parse::<usize>()
            .map_err(|_| err(format!("row {row:?} is not a non-negative integer")))?;
        let expression = label.ok_or_else(|| missing("expression_label"))?.parse()?;
        entries.push(ManifestEntry {
            row,
            meta: SampleMeta {
                sample_id: sample_id.ok_or_else(|| missing("sample_id"))?.to_string(),
                subject_id: subject_id.ok_or_else(|| missing("subject_id"))?.to_string(),
                dataset_name: dataset_name.ok_or_else(|| missing("dataset_name"))?.to_string(),
                expression,
            },
        });
    }
    Ok(entries)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, CodecError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> Result<String, CodecError> {
    let mut out = String::new();
    for (idx, e) in entries.iter().enumerate() {
        let m = &e.meta;
        for v in [&m.sample_id, &m.subject_id, &m.dataset_name] {
            if v.contains(['\t', '\n', '\r']) {
                return Err(CodecError::Manifest {
                    line: idx + 1,
                    message: format!("value {v:?} contains a tab or line break"),
                });
            }
        }
        out.push_str(&format!(
            "row={}\tsample_id={}\tsubject_id={}\tdataset_name={}\texpression_label={}\n",
            e.row, m.sample_id, m.subject_id, m.dataset_name, m.expression
        ));
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), CodecError> {
    let path = path.as_ref();
    let text = format_manifest(entries)?;
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Joins manifest metadata with the four row-aligned matrices in `feature_dir`.
pub fn load_records(
    manifest: impl AsRef<Path>,
    feature_dir: impl AsRef<Path>,
) -> Result<Vec<FeatureRecord>, CodecError> {
    let entries = read_manifest(manifest)?;
    let dir = feature_dir.as_ref();
    let hse1 = read_matrix(dir.join(HSE1_FILE))?;
    let hse2 = read_matrix(dir.join(HSE2_FILE))?;
    let softmax1 = read_matrix(dir.join(SOFTMAX1_FILE))?;
    let softmax2 = read_matrix(dir.join(SOFTMAX2_FILE))?;
    assemble_records(&entries, [&hse1, &hse2, &softmax1, &softmax2])
}

/// In-memory half of [`load_records`]; matrices in file order
/// hse1, hse2, softmax1, softmax2.
pub fn assemble_records(
    entries: &[ManifestEntry],
    matrices: [&FeatureMatrix; 4],
) -> Result<Vec<FeatureRecord>, CodecError> {
    let names = [HSE1_FILE, HSE2_FILE, SOFTMAX1_FILE, SOFTMAX2_FILE];
    let dims = [HSE1_DIM, HSE2_DIM, SOFTMAX_DIM, SOFTMAX_DIM];
    let rows = matrices[0].rows();
    for ((m, name), dim) in matrices.iter().zip(names).zip(dims) {
        if m.rows() != rows {
            return Err(CodecError::RowCountMismatch {
                file: name.to_string(),
                expected: rows,
                found: m.rows(),
            });
        }
        // Empty matrices may carry any column count.
        if m.rows() > 0 && m.cols() != dim {
            return Err(CodecError::ColumnMismatch {
                file: name.to_string(),
                expected: dim,
                found: m.cols(),
            });
        }
    }
    if entries.len() != rows {
        return Err(CodecError::RowCountMismatch {
            file: "manifest".to_string(),
            expected: rows,
            found: entries.len(),
        });
    }

    let mut seen = HashSet::with_capacity(entries.len());
    let mut records = Vec::with_capacity(entries.len());
    for (idx, e) in entries.iter().enumerate() {
        if e.row >= rows {
            return Err(CodecError::RowOutOfRange {
                line: idx + 1,
                row: e.row,
                rows,
            });
        }
        if !seen.insert(e.meta.sample_id.as_str()) {
            return Err(CodecError::DuplicateSample(e.meta.sample_id.clone()));
        }
        let [a, b, c, d] = matrices.map(|m| m.row(e.row).to_vec());
        records.push(FeatureRecord::new(e.meta.clone(), a, b, c, d)?);
    }
    Ok(records)
}

/// Writes records back out as a manifest plus the four matrices, row `i`
/// holding record `i`.
pub fn save_records(
    records: &[FeatureRecord],
    manifest: impl AsRef<Path>,
    feature_dir: impl AsRef<Path>,
) -> Result<(), CodecError> {
    let dir = feature_dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let entries: Vec<ManifestEntry> = records
        .iter()
        .enumerate()
        .map(|(row, r)| ManifestEntry {
            row,
            meta: r.meta.clone(),
        })
        .collect();
    type Getter = fn(&FeatureRecord) -> &[f32];
    let pick: [(&str, usize, Getter); 4] = [
        (HSE1_FILE, HSE1_DIM, FeatureRecord::hse1),
        (HSE2_FILE, HSE2_DIM, FeatureRecord::hse2),
        (SOFTMAX1_FILE, SOFTMAX_DIM, FeatureRecord::softmax1),
        (SOFTMAX2_FILE, SOFTMAX_DIM, FeatureRecord::softmax2),
    ];
    for (name, dim, get) in pick {
        let mut data = Vec::with_capacity(records.len() * dim);
        for r in records {
            data.extend_from_slice(get(r));
        }
        write_matrix(dir.join(name), &FeatureMatrix::new(records.len(), dim, data)?)?;
    }
    write_manifest(manifest, &entries)
}
