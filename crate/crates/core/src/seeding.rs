//! Derived random streams. Every parallel or per-stage generator is seeded
//! from the run seed plus integer tags, so results never depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, t| splitmix64(acc ^ splitmix64(*t)))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Stream tags for the pipeline stages.
pub mod tag {
    pub const COLLECT: u64 = 1;
    pub const UPDATE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const CMA: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const LOOP: u64 = 6;
    pub const ORACLE: u64 = 7;
}
