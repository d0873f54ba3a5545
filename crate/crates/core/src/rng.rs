//! Named random substreams derived from one master seed.
//!
//! Every stochastic component draws from its own stream so that it can be
//! reproduced in isolation: `substream(seed, "head_init")` never depends on
//! how many numbers another component consumed.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stable 64-bit hash (FNV-1a) of a sequence of byte strings.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hasher = FnvHasher::default();
    for part in parts {
        hasher.write(&(part.len() as u64).to_le_bytes());
        hasher.write(part);
    }
    hasher.finish()
}

pub fn substream(master: u64, name: &str) -> Rng {
    substream_indexed(master, name, 0)
}

pub fn substream_indexed(master: u64, name: &str, index: u64) -> Rng {
    let key = stable_hash(&[
        &master.to_le_bytes(),
        name.as_bytes(),
        &index.to_le_bytes(),
    ]);
    ChaCha8Rng::seed_from_u64(key)
}

/// Stream keyed by an arbitrary string, e.g. a pair identifier.
pub fn substream_keyed(master: u64, name: &str, key: &str) -> Rng {
    substream_indexed(master, name, stable_hash(&[key.as_bytes()]))
}
