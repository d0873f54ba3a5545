use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::head::{Architecture, ClassifierHead};
use super::io::{decode_artifact, encode_artifact};
use super::train::{macro_f1, train_head, TrainConfig, TrainReport};
use crate::corpus::{AspectName, ConceptValue, Review};
use crate::features::FeatureMatrix;
use crate::{Error, Result};

pub const ASPECT_SET_MAGIC: &[u8; 4] = b"CEBA";

pub type AspectLabels = [ConceptValue; 4];

/// One three-way head per aspect, classes ordered Negative, Unknown, Positive.
#[derive(Clone, Debug, PartialEq)]
pub struct AspectClassifierSet {
    heads: [ClassifierHead; 4],
}

impl AspectClassifierSet {
    pub fn from_heads(heads: [ClassifierHead; 4]) -> Result<Self> {
        if heads.iter().any(|h| h.classes() != 3) {
            return Err(Error::contract("aspect heads must be three-way"));
        }
        if heads.iter().any(|h| h.input_dim() != heads[0].input_dim()) {
            return Err(Error::contract("aspect heads disagree on input dim"));
        }
        Ok(AspectClassifierSet { heads })
    }

    pub fn head(&self, aspect: AspectName) -> &ClassifierHead {
        &self.heads[aspect.index()]
    }

    /// Argmax value per aspect; exact ties go to the earliest of
    /// Negative, Unknown, Positive.
    pub fn predict(&self, x: &[f64]) -> Result<AspectLabels> {
        let mut out = [ConceptValue::Unknown; 4];
        for (slot, head) in out.iter_mut().zip(&self.heads) {
            *slot = ConceptValue::from_index(head.predict_class(x)?).expect("three classes");
        }
        Ok(out)
    }

    pub fn predict_all(&self, features: &FeatureMatrix) -> Result<Vec<AspectLabels>> {
        features.iter().map(|x| self.predict(x)).collect()
    }

    /// Macro-F1 per aspect over rows whose aspect has a majority label.
    pub fn macro_f1(&self, features: &FeatureMatrix, reviews: &[&Review]) -> Result<BTreeMap<AspectName, f64>> {
        let predicted = self.predict_all(features)?;
        let mut out = BTreeMap::new();
        for aspect in AspectName::ALL {
            let (mut p, mut g) = (Vec::new(), Vec::new());
            for (labels, review) in predicted.iter().zip(reviews) {
                if let Some(v) = review.aspect_value(aspect) {
                    p.push(labels[aspect.index()].index());
                    g.push(v.index());
                }
            }
            if !g.is_empty() {
                out.insert(aspect, macro_f1(&p, &g, 3));
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = SetHeader {
            architecture: self.heads[0].architecture(),
            input_dim: self.heads[0].input_dim(),
        };
        let payload: Vec<f64> = self.heads.iter().flat_map(|h| h.params().iter().copied()).collect();
        encode_artifact(ASPECT_SET_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let per_head = |h: &SetHeader| ClassifierHead::param_count(h.architecture, h.input_dim, 3);
        let (header, payload): (SetHeader, _) = decode_artifact(ASPECT_SET_MAGIC, bytes, |h| 4 * per_head(h))?;
        let n = per_head(&header);
        let heads = four(|i| {
            ClassifierHead::from_params(header.architecture, header.input_dim, 3, payload[i * n..(i + 1) * n].to_vec())
        })?;
        Self::from_heads(heads)
    }

    pub fn quantize_f32(&mut self) {
        self.heads.iter_mut().for_each(ClassifierHead::quantize_f32);
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetHeader {
    architecture: Architecture,
    input_dim: usize,
}

fn four<T, E>(mut f: impl FnMut(usize) -> Result<T, E>) -> Result<[T; 4], E> {
    Ok([f(0)?, f(1)?, f(2)?, f(3)?])
}

/// Trains the four aspect heads on rows with a majority label for that
/// aspect. Each head gets its own seed substream derived from the config
/// seed and the aspect.
pub fn train_aspect_set(
    features: &FeatureMatrix,
    reviews: &[&Review],
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<(AspectClassifierSet, Vec<TrainReport>)> {
    if features.rows() != reviews.len() {
        return Err(Error::contract("feature rows and reviews differ in length"));
    }
    let mut heads = Vec::with_capacity(4);
    let mut reports = Vec::with_capacity(4);
    for aspect in AspectName::ALL {
        let (rows, labels): (Vec<usize>, Vec<usize>) = reviews
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.aspect_value(aspect).map(|v| (i, v.index())))
            .unzip();
        if rows.is_empty() {
            return Err(Error::Fit(format!("no labeled training rows for aspect {}", aspect.as_str())));
        }
        let sub = features.select(&rows);
        let cfg = config
            .clone()
            .with_seed(crate::rng::stable_hash(&[&config.seed.to_le_bytes(), aspect.as_str().as_bytes()]));
        let (mut head, report) = train_head(&sub, &labels, 3, architecture, &cfg)?;
        head.quantize_f32();
        heads.push(head);
        reports.push(report);
    }
    let heads: [ClassifierHead; 4] = heads.try_into().expect("four aspects");
    Ok((AspectClassifierSet::from_heads(heads)?, reports))
}
