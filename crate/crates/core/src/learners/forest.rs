//! Random forest of Gini trees on bootstrap resamples.
//!
//! Tree `t` draws its bootstrap sample and per-node feature subsets from a
//! generator seeded with `derive_seed(seed, t)`. Growth stops after
//! `max_trees` trees, or earlier once the out-of-bag error changes by less
//! than `oob_epsilon` between two consecutive trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{grow, DecisionTree, GrowParams};
use super::{LabeledSet, LearnerError};
use crate::dataset::BinaryLabel;
use crate::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub max_trees: usize,
    pub oob_epsilon: f64,
    pub active_var_count: usize,
    pub min_sample_count: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            max_trees: 75,
            oob_epsilon: 0.05,
            active_var_count: 100,
            min_sample_count: 12,
            max_depth: 25,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if self.max_trees == 0 {
            return bad("max_trees must be at least 1");
        }
        if !(self.oob_epsilon > 0.0 && self.oob_epsilon < 1.0) {
            return bad("oob_epsilon must lie in (0, 1)");
        }
        if self.active_var_count == 0 {
            return bad("active_var_count must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub(crate) trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn neutral_votes(&self, x: &[f32]) -> usize {
        self.trees
            .iter()
            .filter(|t| t.predict(x) == BinaryLabel::Neutral)
            .count()
    }

    pub fn confidence(&self, x: &[f32]) -> f64 {
        self.neutral_votes(x) as f64 / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestReport {
    /// Out-of-bag error after each tree; `None` while no sample has been
    /// out of bag yet.
    pub oob_errors: Vec<Option<f64>>,
    pub stopped_on_epsilon: bool,
}

pub fn train(set: &LabeledSet, cfg: &ForestConfig) -> Result<(ForestModel, ForestReport), LearnerError> {
    cfg.validate()?;
    set.require_both_classes()?;

    let n = set.len();
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_sample_count: cfg.min_sample_count,
        features_per_node: Some(cfg.active_var_count),
    };
    let mut trees = Vec::new();
    let mut neutral_votes = vec![0u32; n];
    let mut oob_votes = vec![0u32; n];
    let mut oob_errors = Vec::new();
    let mut stopped_on_epsilon = false;

    for t in 0..cfg.max_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
        let mut in_bag = vec![false; n];
        let items: Vec<(usize, f64)> = (0..n)
            .map(|_| {
                let i = rng.gen_range(0..n);
                in_bag[i] = true;
                (i, 1.0)
            })
            .collect();
        let tree = grow(set, items, params, &mut rng);

        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_votes[i] += 1;
            if tree.predict(set.row(i)) == BinaryLabel::Neutral {
                neutral_votes[i] += 1;
            }
        }
        trees.push(tree);

        let error = oob_error(set, &neutral_votes, &oob_votes);
        let previous = oob_errors.last().copied().flatten();
        oob_errors.push(error);
        if let (Some(prev), Some(cur)) = (previous, error) {
            if (cur - prev).abs() < cfg.oob_epsilon {
                stopped_on_epsilon = true;
                break;
            }
        }
    }

    Ok((
        ForestModel { trees },
        ForestReport {
            oob_errors,
            stopped_on_epsilon,
        },
    ))
}

/// Majority-vote error over samples with at least one out-of-bag vote; a
/// tied vote counts as neutral, matching the confidence threshold.
fn oob_error(set: &LabeledSet, neutral: &[u32], votes: &[u32]) -> Option<f64> {
    let mut evaluated = 0usize;
    let mut wrong = 0usize;
    for i in 0..set.len() {
        if votes[i] == 0 {
            continue;
        }
        evaluated += 1;
        let predicted = if 2 * neutral[i] >= votes[i] {
            BinaryLabel::Neutral
        } else {
            BinaryLabel::NonNeutral
        };
        if predicted != set.label(i) {
            wrong += 1;
        }
    }
    (evaluated > 0).then(|| wrong as f64 / evaluated as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ComboScheme;
    use crate::dataset::BinaryLabel::{NonNeutral as Nn, Neutral as N};
    use crate::learners::tree::Node;

    fn blobs() -> LabeledSet {
        let rows: Vec<Vec<f32>> = (0..60)
            .map(|i| {
                let side = if i % 2 == 0 { 2.0 } else { -2.0 };
                vec![side + (i as f32 * 0.13).sin(), (i as f32 * 0.71).cos()]
            })
            .collect();
        let labels = (0..60).map(|i| if i % 2 == 0 { N } else { Nn }).collect();
        LabeledSet::new(ComboScheme::Hse1, rows, labels).unwrap()
    }

    #[test]
    fn votes_are_fractions() {
        let leaf = |label| DecisionTree {
            nodes: vec![Node::Leaf { label, samples: 1 }],
        };
        let mut trees = vec![leaf(N); 30];
        trees.extend(vec![leaf(Nn); 45]);
        let model = ForestModel { trees };
        assert_eq!(model.confidence(&[0.0]), 0.4);
        let unanimous = ForestModel { trees: vec![leaf(N); 75] };
        assert_eq!(unanimous.confidence(&[0.0]), 1.0);
    }

    #[test]
    fn deterministic_and_accurate() {
        let cfg = ForestConfig {
            active_var_count: 1,
            min_sample_count: 2,
            seed: 9,
            ..ForestConfig::default()
        };
        let (a, report) = train(&blobs(), &cfg).unwrap();
        let (b, _) = train(&blobs(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trees().len() <= 75);
        assert_eq!(report.oob_errors.len(), a.trees().len());
        for (x, l) in blobs().rows().iter().zip(blobs().labels()) {
            assert_eq!(a.confidence(x) >= 0.5, *l == N);
        }
    }

    #[test]
    fn single_class_rejected() {
        let set = LabeledSet::new(ComboScheme::Hse1, vec![vec![1.0], vec![2.0]], vec![Nn, Nn]).unwrap();
        assert_eq!(train(&set, &ForestConfig::default()).unwrap_err(), LearnerError::SingleClass(Nn));
    }
}
