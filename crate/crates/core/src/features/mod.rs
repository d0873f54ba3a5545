//! Text featurizers: signed n-gram hashing and precomputed embedding tables.

mod embeddings;
mod hashing;

pub use embeddings::{
    load_embedding_table, manifest_path, write_embedding_table, EmbeddingManifest, EmbeddingTable,
    MAGIC, VERSION,
};
pub use hashing::{featurize_hashed, tokenize, HashingConfig};

use crate::corpus::Review;
use crate::{Error, Result};

/// Source of fixed-length feature vectors for reviews.
#[derive(Clone, Debug)]
pub enum Featurizer {
    Hashed(HashingConfig),
    Table(EmbeddingTable),
}

impl Featurizer {
    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Hashed(c) => c.dim,
            Featurizer::Table(t) => t.dim(),
        }
    }

    pub fn provenance(&self) -> String {
        match self {
            Featurizer::Hashed(c) => format!("hashed-ngram(n<={},h={},seed={})", c.ngram_max, c.dim, c.seed),
            Featurizer::Table(t) => t.provenance.clone(),
        }
    }

    pub fn featurize(&self, review: &Review) -> Result<Vec<f64>> {
        match self {
            Featurizer::Hashed(c) => featurize_hashed(&review.text, c),
            Featurizer::Table(t) => t
                .get(&review.id)
                .map(|v| v.iter().map(|x| *x as f64).collect())
                .ok_or_else(|| Error::Integrity {
                    message: "review missing from embedding table".into(),
                    ids: vec![review.id.clone()],
                }),
        }
    }
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut m = FeatureMatrix::new(dim);
        for r in rows {
            m.push(&r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::contract(format!(
                "feature row has dim {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.dim);
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn map_rows(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> FeatureMatrix {
        let mut data = vec![0.0; self.rows() * out_dim];
        for (src, dst) in self.iter().zip(data.chunks_exact_mut(out_dim.max(1))) {
            f(src, dst);
        }
        FeatureMatrix { dim: out_dim, data }
    }
}

/// Featurizes the given reviews in order.
pub fn featurize_all(featurizer: &Featurizer, reviews: &[&Review]) -> Result<FeatureMatrix> {
    let mut m = FeatureMatrix::new(featurizer.dim());
    for r in reviews {
        m.push(&featurizer.featurize(r)?)?;
    }
    Ok(m)
}
