//! Seeded randomness.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded with
//! `seed_from_u64`. Independent streams (per trial, per split, per mask) are
//! derived from one master seed with a SplitMix64 step over `(seed, tag)`, so
//! a given `(master_seed, tag)` always produces the same stream regardless of
//! the order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Tags for the sub-streams used by the experiment harness.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const TRAIN_MASK: u64 = 2;
    pub const TEST_MASK: u64 = 3;
    pub const CALIBRATION: u64 = 4;
    pub const TRIAL: u64 = 0x100;
}
