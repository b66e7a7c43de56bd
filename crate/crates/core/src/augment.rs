//! Noisy variants of a real parameter set, used as VAE training data.
//!
//! Each variant copies the flat parameters and adds `N(0, σ²)` noise at a
//! uniformly sampled subset of `round(ρ·n)` positions. Variant `i` draws
//! from its own ChaCha8 stream (`seed`, stream `i`), so variants do not
//! depend on each other or on generation order.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub n_train: usize,
    pub n_val: usize,
    /// Fraction of positions perturbed per variant, in (0, 1].
    pub position_fraction: f64,
    pub noise_std: f32,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { n_train: 80, n_val: 20, position_fraction: 0.3, noise_std: 0.01, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variants {
    pub train: Vec<Tensor>,
    pub val: Vec<Tensor>,
}

/// Number of positions perturbed in a length-`n` sequence.
pub fn perturbed_count(n: usize, fraction: f64) -> usize {
    ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n)
}

fn variant(flat: &[f32], config: &AugmentConfig, index_in_set: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index_in_set);
    let mut out = flat.to_vec();
    let k = perturbed_count(flat.len(), config.position_fraction);
    let mut positions = index::sample(&mut rng, flat.len(), k).into_vec();
    positions.sort_unstable();
    if config.noise_std > 0.0 {
        let normal = Normal::new(0.0f32, config.noise_std).expect("positive std");
        for p in positions {
            out[p] += normal.sample(&mut rng);
        }
    }
    Tensor::from_vec(out)
}

/// `n_train` training and `n_val` validation variants of `flat`. The
/// unmodified input is never among them.
pub fn generate_variants(flat: &Tensor, config: &AugmentConfig) -> Variants {
    let data = flat.data();
    let train = (0..config.n_train).map(|i| variant(data, config, i as u64)).collect();
    let val = (0..config.n_val).map(|i| variant(data, config, (config.n_train + i) as u64)).collect();
    Variants { train, val }
}

/// Counts and ratio of a train/validation split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitReport {
    pub n_train: usize,
    pub n_val: usize,
    /// `n_train / n_val`, infinite when there is no validation data.
    pub ratio: f64,
    /// Whether the split is exactly 4:1.
    pub ok: bool,
}

pub const TARGET_RATIO: f64 = 4.0;

pub fn split_check(n_train: usize, n_val: usize) -> SplitReport {
    let ratio = if n_val == 0 { f64::INFINITY } else { n_train as f64 / n_val as f64 };
    SplitReport { n_train, n_val, ratio, ok: n_val > 0 && n_train == 4 * n_val }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Tensor {
        Tensor::from_vec((0..n).map(|i| (i as f32 / n as f32) * 0.2 - 0.1).collect())
    }

    #[test]
    fn zero_noise_copies_input() {
        let flat = ramp(500);
        let v = generate_variants(&flat, &AugmentConfig { noise_std: 0.0, ..AugmentConfig::default() });
        assert!(v.train.iter().chain(&v.val).all(|t| *t == flat));
    }

    #[test]
    fn default_counts() {
        let v = generate_variants(&ramp(50), &AugmentConfig::default());
        assert_eq!((v.train.len(), v.val.len()), (80, 20));
    }

    #[test]
    fn exact_number_of_positions_differ() {
        let flat = ramp(1000);
        let cfg = AugmentConfig { n_train: 5, n_val: 2, ..AugmentConfig::default() };
        let v = generate_variants(&flat, &cfg);
        for t in v.train.iter().chain(&v.val) {
            let diff = t.data().iter().zip(flat.data()).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 300);
            assert_ne!(t, &flat);
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let flat = ramp(300);
        let cfg = AugmentConfig { n_train: 4, n_val: 1, ..AugmentConfig::default() };
        assert_eq!(generate_variants(&flat, &cfg), generate_variants(&flat, &cfg));
        let other = AugmentConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(generate_variants(&flat, &cfg).train[0], generate_variants(&flat, &other).train[0]);
        let v = generate_variants(&flat, &cfg);
        assert_ne!(v.train[0], v.train[1]);
    }

    #[test]
    fn split_report() {
        assert!(split_check(80, 20).ok);
        assert_eq!(split_check(80, 20).ratio, 4.0);
        assert!(!split_check(50, 50).ok);
        let none = split_check(80, 0);
        assert!(!none.ok);
        assert!(none.ratio.is_infinite());
    }
}
