//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a 64-bit seed mixed from a small tuple of integers, so values
//! never depend on call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(SEED_BASIS, |acc, &p| mix64(acc ^ mix64(p)))
}

const SEED_BASIS: u64 = 0x5EED_0BA5_15C0_FFEE;

pub fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Stream tags keep independent uses of the same (seed, index, epoch) apart.
pub mod stream {
    pub const IMAGE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SIGMA: u64 = 3;
    pub const PAD: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const INIT: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const SPLIT: u64 = 8;
}
