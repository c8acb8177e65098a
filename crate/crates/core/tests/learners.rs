use proptest::prelude::*;

use neutral_gate::codec::{combine, ComboScheme};
use neutral_gate::dataset::{binarize, split_identity_disjoint, BinaryLabel, SplitSpec};
use neutral_gate::learners::container::{MODEL_FORMAT_VERSION, MODEL_MAGIC};
use neutral_gate::learners::svm::{self, SvmConfig};
use neutral_gate::learners::{
    decode_model, encode_model, load_model, load_model_as, predict_confidence, save_model,
    train_boost, train_forest, train_svm, BoostConfig, ClassifierKind, ForestConfig, LabeledSet,
    LearnerError, Model, ModelIoError, TrainedClassifier,
};
use neutral_gate::synthetic::{synth_records, SynthConfig};

use BinaryLabel::{NonNeutral as Nn, Neutral as N};

fn split_sets(scheme: ComboScheme) -> (LabeledSet, LabeledSet) {
    let records = synth_records(
        &SynthConfig {
            subjects: 12,
            samples_per_subject: 5,
            ..SynthConfig::default()
        },
        21,
    );
    let (train, val) = split_identity_disjoint(binarize(records), &SplitSpec::new(0.3, 1).unwrap()).unwrap();
    (LabeledSet::from_samples(&train, scheme), LabeledSet::from_samples(&val, scheme))
}

fn trained_models() -> Vec<TrainedClassifier> {
    let (train, val) = split_sets(ComboScheme::Hse1C);
    vec![
        train_svm(&train, &val, &SvmConfig::default()).unwrap().0,
        train_forest(
            &train,
            &ForestConfig {
                max_trees: 5,
                active_var_count: 20,
                ..ForestConfig::default()
            },
        )
        .unwrap()
        .0,
        train_boost(
            &train,
            &BoostConfig {
                weak_count: 10,
                max_depth: 2,
                ..BoostConfig::default()
            },
        )
        .unwrap()
        .0,
    ]
}

#[test]
fn every_kind_roundtrips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let (_, val) = split_sets(ComboScheme::Hse1C);
    for (model, kind) in trained_models().iter().zip([ClassifierKind::Svm, ClassifierKind::RandomForest, ClassifierKind::AdaBoost]) {
        assert_eq!(model.kind(), kind);
        let path = dir.path().join(format!("{}.ngmd", kind.as_str()));
        save_model(model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], &MODEL_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), MODEL_FORMAT_VERSION);
        assert_eq!(bytes[8], kind.code());
        assert_eq!(bytes[9], ComboScheme::Hse1C.code());

        let back = load_model_as(&path, kind).unwrap();
        assert_eq!(&back, model);
        assert_eq!(encode_model(&back), bytes);
        for row in val.rows() {
            assert_eq!(back.confidence_for(row).unwrap(), model.confidence_for(row).unwrap());
        }
    }
}

#[test]
fn wrong_kind_and_corruption_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let models = trained_models();
    let path = dir.path().join("svm.ngmd");
    save_model(&models[0], &path).unwrap();
    assert!(matches!(
        load_model_as(&path, ClassifierKind::RandomForest),
        Err(ModelIoError::KindMismatch { .. })
    ));
    let mut bytes = encode_model(&models[1]);
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(matches!(decode_model(&bytes), Err(ModelIoError::Checksum { .. })));
    assert!(load_model(dir.path().join("missing.ngmd")).is_err());
}

#[test]
fn scheme_and_dimension_are_enforced() {
    let models = trained_models();
    let records = synth_records(&SynthConfig::default(), 2);
    let wrong = combine(&records[0], ComboScheme::Hse2);
    assert!(matches!(
        predict_confidence(&models[0], &wrong),
        Err(LearnerError::SchemeMismatch { .. })
    ));
    let right = combine(&records[0], ComboScheme::Hse1C);
    let c = predict_confidence(&models[0], &right).unwrap().value();
    assert!((0.0..=1.0).contains(&c));
    assert!(matches!(models[2].confidence_for(&[0.0; 3]), Err(LearnerError::DimensionMismatch { .. })));
}

#[test]
fn learners_separate_synthetic_classes() {
    let (train, val) = split_sets(ComboScheme::Hse2);
    let (svm, report) = train_svm(&train, &val, &SvmConfig::default()).unwrap();
    assert!(report.converged);
    assert!(report.platt_on_validation);
    assert!(svm.accuracy(&val).unwrap() >= 0.9);
    let (forest, _) = train_forest(&train, &ForestConfig::default()).unwrap();
    assert!(forest.accuracy(&val).unwrap() >= 0.9);
    let (boost, _) = train_boost(&train, &BoostConfig { weak_count: 20, ..BoostConfig::default() }).unwrap();
    assert!(boost.accuracy(&val).unwrap() >= 0.9);
}

#[test]
fn forest_confidence_is_vote_fraction() {
    let models = trained_models();
    let Model::Forest(forest) = models[1].model() else { panic!("forest expected") };
    let (_, val) = split_sets(ComboScheme::Hse1C);
    let t = forest.trees().len() as f64;
    for row in val.rows() {
        let c = forest.confidence(row);
        assert_eq!(c, forest.neutral_votes(row) as f64 / t);
    }
}

#[test]
fn boost_confidence_is_logistic_of_margin() {
    let models = trained_models();
    let Model::Boost(boost) = models[2].model() else { panic!("boost expected") };
    let (_, val) = split_sets(ComboScheme::Hse1C);
    for row in val.rows() {
        let m = boost.normalized_margin(row);
        assert!((-1.0..=1.0).contains(&m));
        let expected = 1.0 / (1.0 + (-2.0 * m).exp());
        assert!((boost.confidence(row) - expected).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svm_solution_satisfies_kkt(
        points in prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0, any::<bool>()), 4..30),
        gamma in 0.05f64..5.0,
        c in 0.1f64..10.0,
    ) {
        let mut labels: Vec<BinaryLabel> = points.iter().map(|p| if p.2 { N } else { Nn }).collect();
        labels[0] = N;
        labels[1] = Nn;
        let rows: Vec<Vec<f32>> = points.iter().map(|p| vec![p.0, p.1]).collect();
        let set = LabeledSet::new(ComboScheme::Hse1, rows.clone(), labels.clone()).unwrap();
        let empty = LabeledSet::new(ComboScheme::Hse1, vec![], vec![]).unwrap();
        let cfg = SvmConfig { c, gamma, ..SvmConfig::default() };
        let (model, report) = svm::train(&set, &empty, &cfg).unwrap();
        prop_assert!(report.converged);
        prop_assert!(!report.platt_on_validation);
        let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
        let balance: f64 = report.alphas.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(balance.abs() < 1e-9);
        for (i, row) in rows.iter().enumerate() {
            let a = report.alphas[i];
            prop_assert!((0.0..=c).contains(&a));
            let margin = y[i] * model.decision_value(row);
            let tol = 1e-3 + 1e-9;
            if a == 0.0 {
                prop_assert!(margin >= 1.0 - tol, "alpha 0, margin {}", margin);
            } else if a == c {
                prop_assert!(margin <= 1.0 + tol, "alpha C, margin {}", margin);
            } else {
                prop_assert!((margin - 1.0).abs() <= tol, "free, margin {}", margin);
            }
        }
    }
}
