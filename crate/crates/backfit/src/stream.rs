//! Deterministic derivation of independent RNG streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; a cheap, well-mixed 64-bit permutation.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stream seed for a labeled work unit; distinct salts give decorrelated
/// streams from one master seed.
pub fn stream_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(salt))
}

/// RNG for a labeled work unit.
pub fn stream_rng(master: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, salt))
}
