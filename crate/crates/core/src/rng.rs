//! Deterministic seed derivation.
//!
//! Every randomized stage of the pipeline draws from its own ChaCha stream,
//! keyed by `(base seed, purpose tag, element index)`. Work scheduled across
//! threads therefore produces bit-identical results in any order, and a
//! single `--seed` reproduces an entire experiment.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping unrelated random streams disjoint.
pub mod tags {
    /// Per-sample size/conductivity draw and signature scaling.
    pub const SAMPLE: u64 = 1;
    /// Standalone variation draws from `sample_variations`.
    pub const VARIATION: u64 = 2;
    /// Stratified train/test splitting (indexed by class).
    pub const SPLIT: u64 = 3;
    /// Noise applied to the training rendering of a sample set.
    pub const NOISE_TRAIN: u64 = 4;
    /// Noise applied to the test rendering when its SNR differs.
    pub const NOISE_TEST: u64 = 5;
    /// Per-iteration seeds inside Monte Carlo cross validation.
    pub const MCCV: u64 = 6;
    /// Classifier-internal randomness (init, shuffling, bagging).
    pub const MODEL: u64 = 7;
    /// Added noise requested through `add_noise` on a whole signature.
    pub const SIGNATURE_NOISE: u64 = 8;
    /// Per-trainset seeds inside the bias/variance decomposition.
    pub const TRAINSET: u64 = 9;
}

/// SplitMix64 finalizer; avalanche-mixes one 64-bit word.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapses `(seed, tag, idx)` into a single well-mixed stream seed.
pub fn mix(seed: u64, tag: u64, idx: u64) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ tag);
    splitmix64(h ^ idx)
}

/// Independent generator for element `idx` of the stage identified by `tag`.
pub fn stream(seed: u64, tag: u64, idx: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag, idx))
}
