//! Seeded random sources.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a 64-bit
//! value. Child streams are derived with a SplitMix64 mix of the parent seed
//! and a stream label, so workers get independent, reproducible streams
//! without sharing state.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `label` under `parent`.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    mix64(mix64(parent) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream labels used by the experiment harness.
pub mod stream {
    pub const PARTITION: u64 = 1;
    pub const INIT: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const RESAMPLE: u64 = 4;
}
