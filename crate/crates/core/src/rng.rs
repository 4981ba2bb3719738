//! Seeded, portable randomness.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from a
//! ChaCha8 generator, which is stable across platforms. Replicate-level
//! generators are derived as independent ChaCha streams of the master seed,
//! so parallel and serial runs consume identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Master generator for a seeded operation.
pub fn master(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the master seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a named sub-seed (splitmix64 finalizer over seed and tag).
/// Used when one top-level seed has to fan out into several independent
/// seeded stages (per-replicate training, per-stage Monte Carlo).
pub fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
