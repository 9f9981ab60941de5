//! Seeded random streams.
//!
//! Every run derives independent ChaCha8 streams from one `u64` seed, one
//! stream per purpose, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Recorded in run manifests.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.3, seed_from_u64 + set_stream)";

/// Stream identifiers.
pub mod streams {
    pub const LOSS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DATA: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const PROPERTY: u64 = 6;
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
