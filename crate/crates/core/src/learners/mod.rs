//! Two-class neutral / non-neutral classifiers.
//!
//! Every learner produces a [`TrainedClassifier`] whose
//! [`predict_confidence`] is the confidence that a sample belongs to the
//! neutral class:
//!
//! * SVM: Platt sigmoid of the RBF decision value.
//! * Random forest: fraction of trees voting neutral.
//! * AdaBoost: `sigmoid(2 s)` where `s` is the alpha-weighted mean vote in
//!   `[-1, 1]`, neutral voting `+1`.

pub mod boost;
pub mod container;
pub mod forest;
pub mod svm;
pub mod tree;

use std::fmt;

use thiserror::Error;

use crate::codec::{combine, ComboScheme, ComboVector};
use crate::dataset::{BinaryLabel, LabeledSample};

pub use boost::{BoostConfig, BoostModel, BoostReport};
pub use container::{decode_model, encode_model, load_model, load_model_as, save_model, ModelIoError};
pub use forest::{ForestConfig, ForestModel, ForestReport};
pub use svm::{SvmConfig, SvmModel, SvmReport};
pub use tree::DecisionTree;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("training data contains only {0:?} samples")]
    SingleClass(BinaryLabel),
    #[error("training data is empty")]
    Empty,
    #[error("feature vector has {found} values, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{labels} labels for {rows} feature rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("model was trained on {model} features, input is {input}")]
    SchemeMismatch { model: ComboScheme, input: ComboScheme },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Feature rows with binary labels, all of one width.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    scheme: ComboScheme,
    dim: usize,
    rows: Vec<Vec<f32>>,
    labels: Vec<BinaryLabel>,
}

impl LabeledSet {
    /// The row width is taken from the data, so toy sets of any width can be
    /// tagged with a scheme. An empty set gets the scheme's width.
    pub fn new(
        scheme: ComboScheme,
        rows: Vec<Vec<f32>>,
        labels: Vec<BinaryLabel>,
    ) -> Result<Self, LearnerError> {
        if rows.len() != labels.len() {
            return Err(LearnerError::LabelCount {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let dim = rows.first().map_or(scheme.dim(), Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(LearnerError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            scheme,
            dim,
            rows,
            labels,
        })
    }

    pub fn from_samples(samples: &[LabeledSample], scheme: ComboScheme) -> Self {
        let rows = samples
            .iter()
            .map(|s| combine(s.record(), scheme).into_values())
            .collect();
        let labels = samples.iter().map(LabeledSample::label).collect();
        Self {
            scheme,
            dim: scheme.dim(),
            rows,
            labels,
        }
    }

    pub fn scheme(&self) -> ComboScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }

    pub fn label(&self, i: usize) -> BinaryLabel {
        self.labels[i]
    }

    pub fn labels(&self) -> &[BinaryLabel] {
        &self.labels
    }

    pub(crate) fn require_both_classes(&self) -> Result<(), LearnerError> {
        let first = *self.labels.first().ok_or(LearnerError::Empty)?;
        if self.labels.iter().all(|&l| l == first) {
            return Err(LearnerError::SingleClass(first));
        }
        Ok(())
    }

    pub(crate) fn require_dim(&self, dim: usize) -> Result<(), LearnerError> {
        if !self.is_empty() && self.dim != dim {
            return Err(LearnerError::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }
}

/// Neutral-class confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Confidence(f64);

impl Confidence {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Neutral at or above one half.
    pub fn label(self) -> BinaryLabel {
        if self.0 >= 0.5 {
            BinaryLabel::Neutral
        } else {
            BinaryLabel::NonNeutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Svm,
    RandomForest,
    AdaBoost,
}

impl ClassifierKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [Self::Svm, Self::RandomForest, Self::AdaBoost]
            .get(code as usize)
            .copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::AdaBoost => "adaboost",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Forest(ForestModel),
    Boost(BoostModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    scheme: ComboScheme,
    dim: usize,
    model: Model,
}

impl TrainedClassifier {
    pub fn new(scheme: ComboScheme, dim: usize, model: Model) -> Self {
        Self { scheme, dim, model }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.model {
            Model::Svm(_) => ClassifierKind::Svm,
            Model::Forest(_) => ClassifierKind::RandomForest,
            Model::Boost(_) => ClassifierKind::AdaBoost,
        }
    }

    pub fn scheme(&self) -> ComboScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Confidence for a raw feature row of the model's width.
    pub fn confidence_for(&self, x: &[f32]) -> Result<Confidence, LearnerError> {
        if x.len() != self.dim {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let value = match &self.model {
            Model::Svm(m) => m.confidence(x),
            Model::Forest(m) => m.confidence(x),
            Model::Boost(m) => m.confidence(x),
        };
        Ok(Confidence(value.clamp(0.0, 1.0)))
    }

    /// Fraction of `set` whose thresholded confidence matches its label.
    pub fn accuracy(&self, set: &LabeledSet) -> Result<f64, LearnerError> {
        if set.is_empty() {
            return Ok(f64::NAN);
        }
        let mut correct = 0usize;
        for (row, &label) in set.rows().iter().zip(set.labels()) {
            if self.confidence_for(row)?.label() == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / set.len() as f64)
    }
}

pub fn predict_confidence(
    model: &TrainedClassifier,
    x: &ComboVector,
) -> Result<Confidence, LearnerError> {
    if x.scheme() != model.scheme {
        return Err(LearnerError::SchemeMismatch {
            model: model.scheme,
            input: x.scheme(),
        });
    }
    model.confidence_for(x.values())
}

pub fn train_svm(
    train: &LabeledSet,
    validation: &LabeledSet,
    cfg: &SvmConfig,
) -> Result<(TrainedClassifier, SvmReport), LearnerError> {
    let (model, report) = svm::train(train, validation, cfg)?;
    Ok((TrainedClassifier::new(train.scheme(), train.dim(), Model::Svm(model)), report))
}

pub fn train_forest(
    train: &LabeledSet,
    cfg: &ForestConfig,
) -> Result<(TrainedClassifier, ForestReport), LearnerError> {
    let (model, report) = forest::train(train, cfg)?;
    Ok((TrainedClassifier::new(train.scheme(), train.dim(), Model::Forest(model)), report))
}

pub fn train_boost(
    train: &LabeledSet,
    cfg: &BoostConfig,
) -> Result<(TrainedClassifier, BoostReport), LearnerError> {
    let (model, report) = boost::train(train, cfg)?;
    Ok((TrainedClassifier::new(train.scheme(), train.dim(), Model::Boost(model)), report))
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
