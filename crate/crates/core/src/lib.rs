//! Expression-neutrality quality assessment for face images.
//!
//! Embeddings from two expression recognizers are combined into feature
//! vectors, a binary neutral / non-neutral classifier (SVM, random forest or
//! AdaBoost) is trained on them, and its neutral-class confidence serves as
//! a quality score. The score is evaluated as a classifier (DET / EER) and
//! as a recognition-utility predictor (EDC / pAUC).

pub mod cli;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod learners;
pub mod neutrality;
pub mod synthetic;

/// Mixes a master seed with a stream index (SplitMix64 finalizer), so that
/// per-tree and per-stage generators are independent yet reproducible.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::derive_seed;

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
