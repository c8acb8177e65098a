use std::fs;

use proptest::prelude::*;

use neutral_gate::codec::{
    combine, decode_matrix, encode_matrix, load_records, read_matrix, save_records, ComboScheme,
    CodecError, Expression, FeatureMatrix, HSE1_DIM, HSE2_DIM, SOFTMAX_DIM,
};
use neutral_gate::synthetic::{synth_records, SynthConfig};

/// Writes a `.feat` file byte by byte, the way an external producer would.
fn handwritten_feat(rows: u32, cols: u32, value: impl Fn(u32, u32) -> f32) -> Vec<u8> {
    let mut out = b"FEAT".to_vec();
    for word in [1u32, rows, cols] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&value(r, c).to_le_bytes());
        }
    }
    out
}

fn softmax_value(r: u32, c: u32) -> f32 {
    if c == r % SOFTMAX_DIM as u32 {
        0.93
    } else {
        0.01
    }
}

#[test]
fn reads_externally_produced_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("features");
    fs::create_dir(&feats).unwrap();
    let rows = 5u32;
    fs::write(feats.join("hse1.feat"), handwritten_feat(rows, 1280, |r, c| (r * 10000 + c) as f32)).unwrap();
    fs::write(feats.join("hse2.feat"), handwritten_feat(rows, 1408, |r, c| -((r + c) as f32))).unwrap();
    fs::write(feats.join("softmax1.feat"), handwritten_feat(rows, 8, softmax_value)).unwrap();
    fs::write(feats.join("softmax2.feat"), handwritten_feat(rows, 8, softmax_value)).unwrap();
    let labels = ["neutral", "anger", "happiness", "neutral", "surprise"];
    let manifest: String = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("row={i}\tsample_id=img{i}\tsubject_id=p{}\tdataset_name=MUG\texpression_label={l}\n", i / 2))
        .collect();
    let manifest_path = dir.path().join("manifest.tsv");
    fs::write(&manifest_path, manifest).unwrap();

    let records = load_records(&manifest_path, &feats).unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(records[2].sample_id(), "img2");
    assert_eq!(records[2].subject_id(), "p1");
    assert_eq!(records[1].expression(), Expression::Anger);
    assert_eq!(records[3].hse1()[7], 30007.0);
    assert_eq!(records[4].hse2()[2], -6.0);
    assert_eq!(records[0].softmax1()[0], 0.93);
    assert_eq!(combine(&records[0], ComboScheme::Hse12C).values().len(), 2704);
}

#[test]
fn rejects_column_mismatch_from_producer() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("hse1.feat"), handwritten_feat(1, 1279, |_, _| 0.0)).unwrap();
    fs::write(dir.path().join("hse2.feat"), handwritten_feat(1, 1408, |_, _| 0.0)).unwrap();
    fs::write(dir.path().join("softmax1.feat"), handwritten_feat(1, 8, softmax_value)).unwrap();
    fs::write(dir.path().join("softmax2.feat"), handwritten_feat(1, 8, softmax_value)).unwrap();
    let manifest = dir.path().join("m.tsv");
    fs::write(&manifest, "row=0\tsample_id=a\tsubject_id=s\tdataset_name=d\texpression_label=neutral\n").unwrap();
    let err = load_records(&manifest, dir.path()).unwrap_err();
    assert!(matches!(err, CodecError::ColumnMismatch { expected: 1280, found: 1279, .. }), "{err}");
}

#[test]
fn softmax_rows_must_be_distributions() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("hse1.feat"), handwritten_feat(1, 1280, |_, _| 0.0)).unwrap();
    fs::write(dir.path().join("hse2.feat"), handwritten_feat(1, 1408, |_, _| 0.0)).unwrap();
    fs::write(dir.path().join("softmax1.feat"), handwritten_feat(1, 8, |_, _| 0.5)).unwrap();
    fs::write(dir.path().join("softmax2.feat"), handwritten_feat(1, 8, softmax_value)).unwrap();
    let manifest = dir.path().join("m.tsv");
    fs::write(&manifest, "row=0\tsample_id=a\tsubject_id=s\tdataset_name=d\texpression_label=neutral\n").unwrap();
    assert!(matches!(load_records(&manifest, dir.path()), Err(CodecError::InvalidRecord { .. })));
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let records = synth_records(
        &SynthConfig {
            subjects: 4,
            samples_per_subject: 3,
            ..SynthConfig::default()
        },
        9,
    );
    let manifest = dir.path().join("manifest.tsv");
    save_records(&records, &manifest, dir.path().join("f")).unwrap();
    assert_eq!(load_records(&manifest, dir.path().join("f")).unwrap(), records);
    let hse2 = read_matrix(dir.path().join("f/hse2.feat")).unwrap();
    assert_eq!((hse2.rows(), hse2.cols()), (12, HSE2_DIM));
}

#[test]
fn file_length_is_header_plus_payload() {
    let bytes = encode_matrix(&FeatureMatrix::zeros(3, HSE1_DIM)).unwrap();
    assert_eq!(bytes.len(), 16 + 4 * 3 * HSE1_DIM);
    assert_eq!(&bytes[..4], b"FEAT");
    assert_eq!(bytes, handwritten_feat(3, HSE1_DIM as u32, |_, _| 0.0));
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(rows in 0usize..12, cols in 0usize..40, seed in any::<u32>()) {
        let data: Vec<f32> = (0..rows * cols)
            .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 40503)))
            .collect();
        let m = FeatureMatrix::new(rows, cols, data).unwrap();
        let back = decode_matrix(&encode_matrix(&m).unwrap()).unwrap();
        prop_assert_eq!(back.rows(), rows);
        prop_assert_eq!(back.cols(), cols);
        let bits = |m: &FeatureMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn truncation_is_always_rejected(rows in 1usize..6, cols in 1usize..6, cut in 1usize..16) {
        let bytes = encode_matrix(&FeatureMatrix::zeros(rows, cols)).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(decode_matrix(&bytes[..bytes.len() - cut]).is_err());
    }
}
