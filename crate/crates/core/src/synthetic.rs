//! Seeded generators for full-size feature records and mated comparisons,
//! used for tests and desk-scale pipeline runs without real images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{Expression, FeatureRecord, SampleMeta, HSE1_DIM, HSE2_DIM, SOFTMAX_DIM};
use crate::derive_seed;
use crate::eval::MatedComparison;

/// Expressions the eight softmax outputs stand for, in column order.
pub const SOFTMAX_CLASSES: [Expression; SOFTMAX_DIM] = [
    Expression::Anger,
    Expression::Contempt,
    Expression::Disgust,
    Expression::Fear,
    Expression::Happiness,
    Expression::Neutral,
    Expression::Sadness,
    Expression::Surprise,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub neutral_share: f64,
    /// Mean offset between the classes along the informative dimensions.
    pub separation: f32,
    pub informative_dims: usize,
    pub noise: f32,
    pub datasets: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 20,
            samples_per_subject: 6,
            neutral_share: 0.4,
            separation: 1.5,
            informative_dims: 32,
            noise: 0.5,
            datasets: 2,
        }
    }
}

/// Records ordered by subject, then by sample index within the subject.
pub fn synth_records(cfg: &SynthConfig, seed: u64) -> Vec<FeatureRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, cfg.noise.max(f32::MIN_POSITIVE)).expect("finite noise");
    let datasets = cfg.datasets.max(1);
    let mut out = Vec::with_capacity(cfg.subjects * cfg.samples_per_subject);
    for s in 0..cfg.subjects {
        for k in 0..cfg.samples_per_subject {
            let neutral = rng.gen_bool(cfg.neutral_share.clamp(0.0, 1.0));
            let expression = if neutral {
                Expression::Neutral
            } else {
                let others: Vec<Expression> = SOFTMAX_CLASSES
                    .iter()
                    .copied()
                    .filter(|&e| e != Expression::Neutral)
                    .collect();
                others[rng.gen_range(0..others.len())]
            };
            let shift = if neutral { cfg.separation } else { -cfg.separation };
            let mut embed = |dim: usize| -> Vec<f32> {
                (0..dim)
                    .map(|j| {
                        let mean = if j < cfg.informative_dims { shift } else { 0.0 };
                        mean + noise.sample(&mut rng)
                    })
                    .collect()
            };
            let hse1 = embed(HSE1_DIM);
            let hse2 = embed(HSE2_DIM);
            let softmax1 = softmax_for(expression, &mut rng);
            let softmax2 = softmax_for(expression, &mut rng);
            let meta = SampleMeta {
                sample_id: format!("s{s:04}_{k:03}"),
                subject_id: format!("subj{s:04}"),
                dataset_name: format!("synth{}", s % datasets),
                expression,
            };
            out.push(
                FeatureRecord::new(meta, hse1, hse2, softmax1, softmax2)
                    .expect("generator emits valid records"),
            );
        }
    }
    out
}

fn softmax_for(expression: Expression, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let logits: Vec<f64> = SOFTMAX_CLASSES
        .iter()
        .map(|&e| rng.gen_range(-1.0..1.0) + if e == expression { 2.5 } else { 0.0 })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / total) as f32).collect()
}

/// All within-subject pairs. Pairs involving non-neutral samples score
/// lower on average, so neutrality carries recognition utility.
pub fn synth_comparisons(records: &[FeatureRecord], seed: u64) -> Vec<MatedComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let jitter = Normal::new(0.0, 0.08).expect("finite jitter");
    let mut out = Vec::new();
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            if a.subject_id() != b.subject_id() {
                continue;
            }
            let expressive = [a, b]
                .iter()
                .filter(|r| r.expression() != Expression::Neutral)
                .count();
            let similarity = 0.7 - 0.15 * expressive as f64 + jitter.sample(&mut rng);
            out.push(MatedComparison {
                probe_id: a.sample_id().to_string(),
                reference_id: b.sample_id().to_string(),
                similarity,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let cfg = SynthConfig {
            subjects: 3,
            samples_per_subject: 4,
            ..SynthConfig::default()
        };
        let a = synth_records(&cfg, 5);
        assert_eq!(a.len(), 12);
        assert_eq!(a, synth_records(&cfg, 5));
        assert_ne!(a, synth_records(&cfg, 6));
        let pairs = synth_comparisons(&a, 5);
        // C(4, 2) pairs per subject
        assert_eq!(pairs.len(), 18);
        assert!(pairs.iter().all(|p| p.probe_id != p.reference_id));
    }
}
