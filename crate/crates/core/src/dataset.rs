//! Neutral / non-neutral relabeling, class balancing and identity-disjoint
//! train/validation splitting.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{Expression, FeatureRecord};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("cannot balance: no {0:?} samples")]
    MissingClass(BinaryLabel),
    #[error("identity-disjoint split needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("validation fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryLabel {
    Neutral,
    NonNeutral,
}

impl BinaryLabel {
    pub fn of(expression: Expression) -> Self {
        if expression == Expression::Neutral {
            BinaryLabel::Neutral
        } else {
            BinaryLabel::NonNeutral
        }
    }

    /// +1 for neutral, -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            BinaryLabel::Neutral => 1.0,
            BinaryLabel::NonNeutral => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    record: FeatureRecord,
    label: BinaryLabel,
}

impl LabeledSample {
    pub fn new(record: FeatureRecord) -> Self {
        let label = BinaryLabel::of(record.expression());
        Self { record, label }
    }

    pub fn record(&self) -> &FeatureRecord {
        &self.record
    }

    pub fn label(&self) -> BinaryLabel {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    validation_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.30;

    pub fn new(validation_fraction: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
            return Err(DatasetError::InvalidFraction(validation_fraction));
        }
        Ok(Self {
            validation_fraction,
            seed,
        })
    }

    pub fn validation_fraction(&self) -> f64 {
        self.validation_fraction
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_fraction: Self::DEFAULT_VALIDATION_FRACTION,
            seed: 0,
        }
    }
}

pub fn binarize(records: Vec<FeatureRecord>) -> Vec<LabeledSample> {
    records.into_iter().map(LabeledSample::new).collect()
}

/// Down-samples the majority class to the minority count. Kept samples stay
/// in their input order.
pub fn balance(samples: Vec<LabeledSample>, seed: u64) -> Result<Vec<LabeledSample>, DatasetError> {
    let neutral: Vec<usize> = positions(&samples, BinaryLabel::Neutral);
    let other: Vec<usize> = positions(&samples, BinaryLabel::NonNeutral);
    if neutral.is_empty() {
        return Err(DatasetError::MissingClass(BinaryLabel::Neutral));
    }
    if other.is_empty() {
        return Err(DatasetError::MissingClass(BinaryLabel::NonNeutral));
    }
    let (minority, majority) = if neutral.len() <= other.len() {
        (neutral, other)
    } else {
        (other, neutral)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; samples.len()];
    for &i in &minority {
        keep[i] = true;
    }
    for pick in index::sample(&mut rng, majority.len(), minority.len()) {
        keep[majority[pick]] = true;
    }
    Ok(samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect())
}

/// Balances each dataset separately; datasets lacking one class are dropped.
pub fn balance_per_dataset(
    samples: Vec<LabeledSample>,
    seed: u64,
) -> Result<Vec<LabeledSample>, DatasetError> {
    let mut groups: BTreeMap<String, Vec<(usize, LabeledSample)>> = BTreeMap::new();
    for (i, s) in samples.into_iter().enumerate() {
        groups
            .entry(s.record.meta().dataset_name.clone())
            .or_default()
            .push((i, s));
    }
    let mut kept: Vec<(usize, LabeledSample)> = Vec::new();
    for (g, group) in groups.into_values().enumerate() {
        let (order, members): (Vec<usize>, Vec<LabeledSample>) = group.into_iter().unzip();
        let by_id: BTreeMap<String, usize> = members
            .iter()
            .zip(&order)
            .map(|(s, &i)| (s.record.sample_id().to_string(), i))
            .collect();
        match balance(members, seed.wrapping_add(g as u64)) {
            Ok(b) => kept.extend(b.into_iter().map(|s| (by_id[s.record.sample_id()], s))),
            Err(DatasetError::MissingClass(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(DatasetError::MissingClass(BinaryLabel::Neutral));
    }
    kept.sort_by_key(|(i, _)| *i);
    Ok(kept.into_iter().map(|(_, s)| s).collect())
}

fn positions(samples: &[LabeledSample], label: BinaryLabel) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == label)
        .map(|(i, _)| i)
        .collect()
}

/// Assigns whole subjects to the validation partition, walking them in a
/// seeded shuffle and taking a subject whenever it moves the validation
/// size closer to the target. Both partitions always receive at least one
/// subject. Returns `(train, validation)`, each in input order.
pub fn split_identity_disjoint(
    samples: Vec<LabeledSample>,
    split: &SplitSpec,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>), DatasetError> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        *sizes.entry(s.record.subject_id()).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(DatasetError::TooFewSubjects(sizes.len()));
    }

    // BTreeMap order makes the shuffle independent of input order.
    let mut subjects: Vec<(&str, usize)> = sizes.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    subjects.shuffle(&mut rng);

    let target = split.validation_fraction * samples.len() as f64;
    let mut in_validation = vec![false; subjects.len()];
    let mut taken = 0usize;
    for (i, &(_, size)) in subjects.iter().enumerate() {
        let now = (taken as f64 - target).abs();
        let with = ((taken + size) as f64 - target).abs();
        if with < now {
            in_validation[i] = true;
            taken += size;
        }
    }
    if taken == 0 {
        in_validation[0] = true;
    } else if in_validation.iter().all(|&v| v) {
        let last = in_validation.len() - 1;
        in_validation[last] = false;
    }

    let validation_subjects: std::collections::HashSet<String> = subjects
        .iter()
        .zip(&in_validation)
        .filter(|(_, &v)| v)
        .map(|((id, _), _)| id.to_string())
        .collect();
    Ok(samples
        .into_iter()
        .partition(|s| !validation_subjects.contains(s.record.subject_id())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{SampleMeta, HSE1_DIM, HSE2_DIM, SOFTMAX_DIM};

    pub(crate) fn sample(id: usize, subject: usize, expression: Expression) -> LabeledSample {
        let mut soft = vec![0.0; SOFTMAX_DIM];
        soft[0] = 1.0;
        LabeledSample::new(
            FeatureRecord::new(
                SampleMeta {
                    sample_id: format!("x{id}"),
                    subject_id: format!("p{subject}"),
                    dataset_name: if subject.is_multiple_of(2) { "even" } else { "odd" }.into(),
                    expression,
                },
                vec![0.0; HSE1_DIM],
                vec![0.0; HSE2_DIM],
                soft.clone(),
                soft,
            )
            .unwrap(),
        )
    }

    #[test]
    fn labels_follow_expression() {
        assert_eq!(BinaryLabel::of(Expression::Happiness), BinaryLabel::NonNeutral);
        assert_eq!(BinaryLabel::of(Expression::NonNeutralUnspecified), BinaryLabel::NonNeutral);
        assert_eq!(BinaryLabel::of(Expression::Neutral), BinaryLabel::Neutral);
        assert!(binarize(Vec::new()).is_empty());
    }

    #[test]
    fn balance_downsamples_majority() {
        let mut samples: Vec<_> = (0..100).map(|i| sample(i, i, Expression::Neutral)).collect();
        samples.extend((100..160).map(|i| sample(i, i, Expression::Fear)));
        let out = balance(samples.clone(), 3).unwrap();
        let n = out.iter().filter(|s| s.label() == BinaryLabel::Neutral).count();
        assert_eq!((n, out.len() - n), (60, 60));
        // every non-neutral kept, every kept neutral came from the input
        for s in &samples[100..] {
            assert!(out.contains(s));
        }
        for s in &out {
            assert!(samples.contains(s));
        }
        assert_eq!(out, balance(samples, 3).unwrap());
    }

    #[test]
    fn balance_keeps_balanced_input() {
        let samples: Vec<_> = (0..100)
            .map(|i| sample(i, i, if i % 2 == 0 { Expression::Neutral } else { Expression::Anger }))
            .collect();
        assert_eq!(balance(samples.clone(), 9).unwrap(), samples);
    }

    #[test]
    fn balance_requires_both_classes() {
        let samples: Vec<_> = (0..10).map(|i| sample(i, i, Expression::Anger)).collect();
        assert_eq!(balance(samples, 0), Err(DatasetError::MissingClass(BinaryLabel::Neutral)));
    }

    #[test]
    fn per_dataset_balance() {
        let mut samples: Vec<_> = (0..10).map(|i| sample(i, 0, Expression::Neutral)).collect();
        samples.extend((10..14).map(|i| sample(i, 2, Expression::Sadness)));
        // odd dataset only has neutral samples
        samples.extend((14..20).map(|i| sample(i, 1, Expression::Neutral)));
        let out = balance_per_dataset(samples, 5).unwrap();
        assert_eq!(out.len(), 8);
        assert!(out.iter().all(|s| s.record().meta().dataset_name == "even"));
    }

    #[test]
    fn ten_subjects_split_three_to_validation() {
        let samples: Vec<_> = (0..100).map(|i| sample(i, i / 10, Expression::Neutral)).collect();
        for seed in 0..20 {
            let (train, val) = split_identity_disjoint(samples.clone(), &SplitSpec::new(0.3, seed).unwrap()).unwrap();
            assert_eq!(val.len(), 30);
            assert_eq!(train.len(), 70);
            for v in &val {
                assert!(train.iter().all(|t| t.record().subject_id() != v.record().subject_id()));
            }
        }
    }

    #[test]
    fn two_subjects_one_each() {
        let samples: Vec<_> = (0..20).map(|i| sample(i, i / 10, Expression::Neutral)).collect();
        let (train, val) = split_identity_disjoint(samples, &SplitSpec::new(0.3, 1).unwrap()).unwrap();
        assert_eq!((train.len(), val.len()), (10, 10));
    }

    #[test]
    fn split_errors() {
        let one: Vec<_> = (0..5).map(|i| sample(i, 0, Expression::Neutral)).collect();
        assert_eq!(
            split_identity_disjoint(one, &SplitSpec::default()),
            Err(DatasetError::TooFewSubjects(1))
        );
        assert!(SplitSpec::new(0.0, 1).is_err());
        assert!(SplitSpec::new(1.0, 1).is_err());
        assert!(SplitSpec::new(f64::NAN, 1).is_err());
    }
}
