use serde::{Deserialize, Serialize};

use super::svm::{fit_svm, holdout_split, SvmConfig};
use super::{EffectVector, Estimate, Explainer, Query};
use crate::corpus::{AspectName, ConceptValue, Review};
use crate::features::FeatureMatrix;
use crate::linalg::dot;
use crate::model::{decode_artifact, encode_artifact, ClassifierHead};
use crate::{Error, Result};

pub const CAV_MAGIC: &[u8; 4] = b"CEBC";

/// Concept-present (Positive or Negative) versus Unknown; `None` for rows
/// without a majority label.
pub fn concept_presence(reviews: &[&Review], aspect: AspectName) -> Vec<Option<bool>> {
    reviews
        .iter()
        .map(|r| r.aspect_value(aspect).map(|v| v != ConceptValue::Unknown))
        .collect()
}

/// Unit-norm linear direction separating texts that mention a concept from
/// texts that do not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptDirection {
    pub aspect: AspectName,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub heldout_accuracy: f64,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct CavHeader {
    aspect: AspectName,
    dim: usize,
    bias: f64,
    heldout_accuracy: f64,
    epochs: usize,
}

impl ConceptDirection {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CavHeader {
            aspect: self.aspect,
            dim: self.weights.len(),
            bias: self.bias,
            heldout_accuracy: self.heldout_accuracy,
            epochs: self.epochs,
        };
        encode_artifact(CAV_MAGIC, &header, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights): (CavHeader, _) = decode_artifact(CAV_MAGIC, bytes, |h: &CavHeader| h.dim)?;
        Ok(ConceptDirection {
            aspect: h.aspect,
            weights,
            bias: h.bias,
            heldout_accuracy: h.heldout_accuracy,
            epochs: h.epochs,
        })
    }
}

/// Fits the separator on a held-in share of the labeled rows and scores it
/// on the rest. `presence[i]` labels row `i` of `features`.
pub fn fit_cav(
    features: &FeatureMatrix,
    presence: &[Option<bool>],
    aspect: AspectName,
    config: &SvmConfig,
) -> Result<ConceptDirection> {
    if presence.len() != features.rows() {
        return Err(Error::contract("presence labels and features differ in length"));
    }
    let rows: Vec<usize> = (0..presence.len()).filter(|i| presence[*i].is_some()).collect();
    let labels: Vec<bool> = presence.iter().map(|p| p.unwrap_or(false)).collect();
    let stream = format!("cav/{}", aspect.as_str());
    let (fit_rows, held) = holdout_split(&rows, config.holdout_fraction, config.seed, &stream);
    let sep = fit_svm(features, &fit_rows, &labels, config, &stream)
        .map_err(|e| Error::Fit(format!("CAV for {}: {e}", aspect.as_str())))?;
    let heldout_accuracy = sep.accuracy(features, &held, &labels);
    let n = crate::linalg::norm(&sep.weights);
    if n == 0.0 {
        return Err(Error::Fit(format!("CAV for {} has zero weights", aspect.as_str())));
    }
    Ok(ConceptDirection {
        aspect,
        weights: sep.weights.iter().map(|w| w / n).collect(),
        bias: sep.bias / n,
        heldout_accuracy,
        epochs: sep.epochs,
    })
}

fn directional_derivatives(model: &ClassifierHead, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    (0..model.classes())
        .map(|k| model.grad_logit_wrt_input(x, k).map(|g| dot(&g, v)))
        .collect()
}

/// Fraction of inputs whose class-`k` logit increases along the concept
/// direction.
pub fn tcav_count(model: &ClassifierHead, features: &FeatureMatrix, k: usize, cav: &ConceptDirection) -> Result<f64> {
    if features.rows() == 0 {
        return Err(Error::Undefined("TCAV score over an empty dataset".into()));
    }
    let mut positive = 0usize;
    for x in features.iter() {
        if dot(&model.grad_logit_wrt_input(x, k)?, &cav.weights) > 0.0 {
            positive += 1;
        }
    }
    Ok(positive as f64 / features.rows() as f64)
}

/// Per-class directional derivative of the logits along the concept's CAV,
/// squashed by tanh unless `raw`. Ignores `(c, c')`.
#[derive(Clone, Debug)]
pub struct TcavExplainer {
    model: ClassifierHead,
    cavs: Vec<ConceptDirection>,
    raw: bool,
}

impl TcavExplainer {
    pub fn new(model: ClassifierHead, cavs: Vec<ConceptDirection>, raw: bool) -> Result<Self> {
        for a in AspectName::ALL {
            if !cavs.iter().any(|c| c.aspect == a) {
                return Err(Error::contract(format!("missing CAV for {}", a.as_str())));
            }
        }
        Ok(TcavExplainer { model, cavs, raw })
    }

    pub fn cav(&self, aspect: AspectName) -> &ConceptDirection {
        self.cavs.iter().find(|c| c.aspect == aspect).expect("checked in new")
    }

    pub fn estimate(&self, x: &[f64], aspect: AspectName) -> Result<EffectVector> {
        let mut d = directional_derivatives(&self.model, x, &self.cav(aspect).weights)?;
        if !self.raw {
            d.iter_mut().for_each(|v| *v = v.tanh());
        }
        Ok(EffectVector::new(d))
    }
}

impl Explainer for TcavExplainer {
    fn name(&self) -> &str {
        if self.raw {
            "tcav_raw"
        } else {
            "tcav"
        }
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        Ok(Estimate::effect(self.estimate(q.base_features, q.concept)?))
    }
}
