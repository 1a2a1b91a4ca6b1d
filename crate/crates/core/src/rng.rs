//! Deterministic random streams derived from a master seed.
//!
//! Every stochastic task (one day of a simulation, one tree of a forest,
//! one envelope replicate) draws from its own ChaCha stream keyed by the
//! master seed and a tuple of tags, so results do not depend on execution
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Tags separating the purposes streams are used for.
pub mod tag {
    pub const EVENTS: u64 = 1;
    pub const DUMMY: u64 = 2;
    pub const WEATHER: u64 = 3;
    pub const FOREST: u64 = 4;
    pub const IMPORTANCE: u64 = 5;
    pub const ENVELOPE: u64 = 6;
    pub const UNIFORM_DUMMY: u64 = 7;
    pub const REPLICATE: u64 = 8;
}
