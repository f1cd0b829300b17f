//! Seed derivation helpers.
//!
//! Every stochastic stage draws from a [`ChaCha8Rng`] seeded from a master seed
//! and a stream index, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of stream indices.
pub fn derive(seed: u64, streams: &[u64]) -> u64 {
    streams.iter().fold(mix(seed), |acc, &s| mix(acc ^ mix(s)))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, streams: &[u64]) -> Rng {
    seeded(derive(seed, streams))
}

/// Stable 64-bit hash of a string (FNV-1a), used to key per-view streams by name.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
