//! Discrete AdaBoost over depth-bounded Gini trees with weight trimming.
//!
//! Round `t` keeps the heaviest samples whose cumulative weight first
//! reaches `weight_trim_rate`, fits a tree to them, and measures the
//! weighted error `e` on all samples. Then `alpha = ln((1 - e) / e)` and
//! misclassified weights are multiplied by `exp(alpha)` before
//! renormalizing. Boosting stops when `e >= 0.5` (the tree is dropped) or
//! `e == 0` (the tree is kept with `e` floored at machine epsilon so alpha
//! stays finite).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{grow, DecisionTree, GrowParams};
use super::{sigmoid, LabeledSet, LearnerError};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub weak_count: usize,
    pub weight_trim_rate: f64,
    pub min_sample_count: usize,
    pub max_depth: usize,
    /// Weak learners scan every feature, so training does not consume
    /// randomness; the seed is kept for a uniform run configuration.
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            weak_count: 8000,
            weight_trim_rate: 0.9,
            min_sample_count: 12,
            max_depth: 50,
            seed: 42,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.weak_count == 0 {
            return Err(LearnerError::InvalidConfig("weak_count must be at least 1".into()));
        }
        if !(self.weight_trim_rate > 0.0 && self.weight_trim_rate <= 1.0) {
            return Err(LearnerError::InvalidConfig("weight_trim_rate must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub(crate) stages: Vec<(DecisionTree, f64)>,
}

impl BoostModel {
    pub fn stages(&self) -> &[(DecisionTree, f64)] {
        &self.stages
    }

    /// Alpha-weighted mean vote in `[-1, 1]`, neutral = +1.
    pub fn normalized_margin(&self, x: &[f32]) -> f64 {
        let total: f64 = self.stages.iter().map(|(_, a)| a).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let vote: f64 = self
            .stages
            .iter()
            .map(|(tree, a)| a * tree.predict(x).sign())
            .sum();
        vote / total
    }

    pub fn confidence(&self, x: &[f32]) -> f64 {
        sigmoid(2.0 * self.normalized_margin(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    pub error: f64,
    /// `None` when the round's tree was rejected.
    pub alpha: Option<f64>,
    /// Samples kept after trimming.
    pub trimmed_to: usize,
    /// Weights entering the next round.
    pub weights_after: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostStop {
    WeakCount,
    ZeroError,
    WeakLearnerTooWeak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostReport {
    pub initial_weights: Vec<f64>,
    pub rounds: Vec<BoostRound>,
    pub stop: BoostStop,
}

pub fn alpha_for_error(error: f64) -> f64 {
    ((1.0 - error) / error).ln()
}

/// Indices of the heaviest samples whose cumulative weight first reaches
/// `rate` of the total. Ties in weight keep index order.
pub fn trim_by_weight(weights: &[f64], rate: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let target = rate * weights.iter().sum::<f64>();
    let mut cumulative = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumulative += weights[i];
        if cumulative >= target {
            order.truncate(k + 1);
            break;
        }
    }
    order
}

pub fn train(set: &LabeledSet, cfg: &BoostConfig) -> Result<(BoostModel, BoostReport), LearnerError> {
    cfg.validate()?;
    set.require_both_classes()?;

    let n = set.len();
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_sample_count: cfg.min_sample_count,
        features_per_node: None,
    };
    // Unused by full-feature trees, but `grow` takes a generator.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = vec![1.0 / n as f64; n];
    let initial_weights = weights.clone();
    let mut stages = Vec::new();
    let mut rounds = Vec::new();
    let mut stop = BoostStop::WeakCount;

    for _ in 0..cfg.weak_count {
        let kept = trim_by_weight(&weights, cfg.weight_trim_rate);
        let items = kept.iter().map(|&i| (i, weights[i])).collect();
        let tree = grow(set, items, params, &mut rng);

        let missed: Vec<bool> = (0..n)
            .map(|i| tree.predict(set.row(i)) != set.label(i))
            .collect();
        let error: f64 = (0..n).filter(|&i| missed[i]).map(|i| weights[i]).sum();

        if error >= 0.5 {
            rounds.push(BoostRound {
                error,
                alpha: None,
                trimmed_to: kept.len(),
                weights_after: weights.clone(),
            });
            stop = BoostStop::WeakLearnerTooWeak;
            break;
        }
        if error == 0.0 {
            let alpha = alpha_for_error(f64::EPSILON);
            stages.push((tree, alpha));
            rounds.push(BoostRound {
                error,
                alpha: Some(alpha),
                trimmed_to: kept.len(),
                weights_after: weights.clone(),
            });
            stop = BoostStop::ZeroError;
            break;
        }

        let alpha = alpha_for_error(error);
        let boost = alpha.exp();
        for i in 0..n {
            if missed[i] {
                weights[i] *= boost;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        stages.push((tree, alpha));
        rounds.push(BoostRound {
            error,
            alpha: Some(alpha),
            trimmed_to: kept.len(),
            weights_after: weights.clone(),
        });
    }

    Ok((
        BoostModel { stages },
        BoostReport {
            initial_weights,
            rounds,
            stop,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ComboScheme;
    use crate::dataset::BinaryLabel::{NonNeutral as Nn, Neutral as N};

    #[test]
    fn alpha_closed_form() {
        assert!((alpha_for_error(0.25) - 3f64.ln()).abs() < 1e-15);
        assert!((alpha_for_error(0.25) - 1.098612).abs() < 1e-6);
        assert_eq!(alpha_for_error(0.5), 0.0);
    }

    #[test]
    fn trimming_keeps_heaviest_prefix() {
        assert_eq!(trim_by_weight(&[0.1, 0.5, 0.1, 0.3], 0.8), vec![1, 3]);
        assert_eq!(trim_by_weight(&[0.25; 4], 0.9), vec![0, 1, 2, 3]);
        assert_eq!(trim_by_weight(&[0.25; 4], 0.5), vec![0, 1]);
        assert_eq!(trim_by_weight(&[0.2, 0.2, 0.6], 1.0).len(), 3);
    }

    #[test]
    fn separable_stops_after_first_round() {
        let set = LabeledSet::new(
            ComboScheme::Hse1,
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![N, N, Nn, Nn],
        )
        .unwrap();
        let cfg = BoostConfig {
            weak_count: 10,
            min_sample_count: 1,
            max_depth: 1,
            ..BoostConfig::default()
        };
        let (model, report) = train(&set, &cfg).unwrap();
        assert_eq!(report.initial_weights, vec![0.25; 4]);
        assert_eq!(report.rounds.len(), 1);
        assert_eq!(report.rounds[0].error, 0.0);
        assert_eq!(report.stop, BoostStop::ZeroError);
        assert_eq!(model.stages().len(), 1);
        assert!(model.stages()[0].1.is_finite());
        assert!(model.confidence(&[1.0]) > 0.5 && model.confidence(&[4.0]) < 0.5);
    }

    #[test]
    fn empty_model_is_undecided() {
        let model = BoostModel { stages: Vec::new() };
        assert_eq!(model.confidence(&[0.0]), 0.5);
    }
}
