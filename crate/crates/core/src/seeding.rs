//! Independent, reproducible random streams derived from a run seed.
//!
//! A stream is addressed by the run seed plus a path of integers (a purpose
//! tag, a cell index, an episode number, ...). The path is hashed into the
//! 256-bit ChaCha key, so nearby paths give unrelated streams and adding a
//! consumer to one stream never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Purpose tags for the first path element.
pub mod purpose {
    pub const INIT: u64 = 0;
    pub const CONTEXT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const POLICY: u64 = 3;
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for p in path {
        hasher.update(p.to_le_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
