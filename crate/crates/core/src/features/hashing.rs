use serde::{Deserialize, Serialize};

use crate::rng::stable_hash;
use crate::{Error, Result};

/// Signed feature hashing over lowercased word n-grams.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HashingConfig {
    /// Largest n-gram order; all orders `1..=ngram_max` are hashed.
    pub ngram_max: usize,
    /// Number of buckets, a power of two.
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingConfig {
    fn default() -> Self {
        HashingConfig {
            ngram_max: 2,
            dim: 1 << 15,
            seed: 0,
        }
    }
}

impl HashingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_power_of_two() {
            return Err(Error::Config(format!("hashing dim {} is not a power of two", self.dim)));
        }
        if self.ngram_max == 0 {
            return Err(Error::Config("ngram_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unicode-aware lowercase word split on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// L2-normalized signed hashed n-gram counts. Empty token streams map to the
/// zero vector.
pub fn featurize_hashed(text: &str, config: &HashingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let tokens = tokenize(text);
    let mut v = vec![0.0; config.dim];
    let mask = (config.dim - 1) as u64;
    let seed = config.seed.to_le_bytes();
    for n in 1..=config.ngram_max {
        for gram in tokens.windows(n) {
            let joined = gram.join(" ");
            let h = stable_hash(&[&seed, joined.as_bytes()]);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h & mask) as usize] += sign;
        }
    }
    let norm = crate::linalg::norm(&v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}
