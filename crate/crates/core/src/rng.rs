//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! 64-bit seed plus a stream index, so results never depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(mix64(seed) ^ label.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

/// Counter-based substream: same (seed, index) always yields the same sequence.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Labels used to separate independent purposes under one master seed.
pub(crate) mod label {
    pub const COVARIANCE: u64 = 1;
    pub const FEATURES: u64 = 2;
    pub const RESPONSE: u64 = 3;
    pub const NONNULLS: u64 = 4;
    pub const KNOCKOFFS: u64 = 5;
    pub const SCORES: u64 = 6;
    pub const TIES: u64 = 7;
    pub const BATCH: u64 = 8;
    pub const SWAPS: u64 = 9;
}
