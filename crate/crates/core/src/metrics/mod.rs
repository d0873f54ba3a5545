//! Effect metrics: empirical ICaCE, distance-based errors, CaCE and ACaCE,
//! and aggregation over seeds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskGranularity;
use crate::explainers::EffectVector;
use crate::linalg::norm;
use crate::model::ClassifierHead;
use crate::{Error, Result};

/// Norm below which a vector counts as zero for cosine distance.
pub const COSINE_ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
    L2,
    #[serde(alias = "normdiff")]
    NormDiff,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [DistanceMetric::Cosine, DistanceMetric::L2, DistanceMetric::NormDiff];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::L2 => "l2",
            DistanceMetric::NormDiff => "normdiff",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            "l2" | "euclidean" => Ok(DistanceMetric::L2),
            "normdiff" | "norm_diff" | "norm-diff" => Ok(DistanceMetric::NormDiff),
            other => Err(Error::Config(format!("unknown metric {other:?} (cosine, l2, normdiff)"))),
        }
    }
}

/// Distance between an observed and an estimated effect. Cosine distance is
/// `1 - cos`, with cosine similarity taken as 0 when either norm is below
/// [`COSINE_ZERO_NORM`].
pub fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match metric {
        DistanceMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        DistanceMetric::NormDiff => (norm(a) - norm(b)).abs(),
        DistanceMetric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na < COSINE_ZERO_NORM || nb < COSINE_ZERO_NORM {
                return 1.0;
            }
            // 1 - cos = |a/|a| - b/|b||^2 / 2, exact zero for identical inputs.
            let half_sq: f64 = a.iter().zip(b).map(|(x, y)| (x / na - y / nb).powi(2)).sum();
            (0.5 * half_sq).min(2.0)
        }
    }
}

/// `N(edit) - N(base)` from the two feature vectors.
pub fn compute_icace(model: &ClassifierHead, base: &[f64], edit: &[f64]) -> Result<EffectVector> {
    Ok(EffectVector::difference(&model.predict_proba(edit)?, &model.predict_proba(base)?))
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut total = 0.0;
    for v in values {
        total += v;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

/// Mean distance between observed effects and estimates, paired by index.
/// `None` when there are no pairs.
pub fn icace_error(metric: DistanceMetric, observed: &[EffectVector], estimated: &[EffectVector]) -> Option<f64> {
    debug_assert_eq!(observed.len(), estimated.len());
    mean_of(observed.iter().zip(estimated).map(|(o, e)| distance(metric, &o.values, &e.values)))
}

/// Element-wise mean of a set of effects; `None` for an empty set.
pub fn mean_effect(effects: &[EffectVector]) -> Option<EffectVector> {
    let first = effects.first()?;
    let mut total = vec![0.0; first.len()];
    for e in effects {
        total.iter_mut().zip(&e.values).for_each(|(t, v)| *t += v);
    }
    let n = effects.len() as f64;
    Some(EffectVector::new(total.into_iter().map(|t| t / n).collect()))
}

/// CaCE of a cell: the mean of its per-pair ICaCEs.
pub fn compute_cace(icaces: &[EffectVector]) -> Option<EffectVector> {
    mean_effect(icaces)
}

/// Mean change of the class value of the predicted class across pairs,
/// given `(base_class, edit_class)` per pair.
pub fn cace_scalar(predicted: &[(usize, usize)], granularity: TaskGranularity) -> Option<f64> {
    if predicted.is_empty() {
        return None;
    }
    let diffs: Vec<f64> = predicted
        .iter()
        .map(|(b, e)| granularity.class_value(*e) - granularity.class_value(*b))
        .collect();
    Some(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Mean of the defined entries and how many were defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub value: f64,
    pub cells: usize,
}

/// Mean of `‖CaCE‖` over the unordered value pairs of a concept; empty
/// cells are skipped.
pub fn acace(caces: &[Option<EffectVector>]) -> Option<CellMean> {
    let norms: Vec<f64> = caces.iter().flatten().map(EffectVector::norm).collect();
    Some(CellMean {
        value: mean_of(norms.iter().copied())?,
        cells: norms.len(),
    })
}

/// Distance between a cell's CaCE and the mean explainer estimate in it.
pub fn cace_error(metric: DistanceMetric, cace: &EffectVector, estimates: &[EffectVector]) -> Option<f64> {
    let mean = mean_effect(estimates)?;
    Some(distance(metric, &cace.values, &mean.values))
}

/// Per unordered value pair of a concept: the CaCE (taken in canonical
/// direction) paired with the explainer estimates for that direction.
pub struct AcaceCell<'a> {
    pub cace: Option<&'a EffectVector>,
    pub estimates: &'a [EffectVector],
}

/// `|ACaCE - mean over cells of mean ‖estimate‖|`, over cells where both the
/// CaCE and at least one estimate exist.
pub fn acace_error(cells: &[AcaceCell<'_>]) -> Option<CellMean> {
    let mut truth = Vec::new();
    let mut est = Vec::new();
    for c in cells {
        if let (Some(cace), Some(m)) = (c.cace, mean_of(c.estimates.iter().map(EffectVector::norm))) {
            truth.push(cace.norm());
            est.push(m);
        }
    }
    let t = mean_of(truth.iter().copied())?;
    let e = mean_of(est.iter().copied())?;
    Some(CellMean {
        value: (t - e).abs(),
        cells: truth.len(),
    })
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: f64,
    /// `None` with fewer than two seeds.
    pub std: Option<f64>,
    pub n_seeds: usize,
}

impl SeedAggregate {
    pub fn single_seed(&self) -> bool {
        self.n_seeds < 2
    }
}

pub fn aggregate_seeds(values: &[f64]) -> Option<SeedAggregate> {
    let mean = mean_of(values.iter().copied())?;
    let std = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (values.len() - 1) as f64).sqrt()
    });
    Some(SeedAggregate {
        mean,
        std,
        n_seeds: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_distances() {
        let a = [0.6, -0.6];
        let b = [0.3, -0.3];
        assert!((distance(DistanceMetric::L2, &a, &b) - 0.18f64.sqrt()).abs() < 1e-12);
        assert!((distance(DistanceMetric::NormDiff, &a, &b) - 0.18f64.sqrt()).abs() < 1e-12);
        assert!(distance(DistanceMetric::Cosine, &a, &b).abs() < 1e-12);
        assert!((distance(DistanceMetric::Cosine, &a, &[-0.6, 0.6]) - 2.0).abs() < 1e-12);
        assert_eq!(distance(DistanceMetric::Cosine, &[0.0, 0.0], &a), 1.0);
    }

    #[test]
    fn seed_aggregate() {
        let agg = aggregate_seeds(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(agg.mean, 3.0);
        assert!((agg.std.unwrap() - 2.5f64.sqrt()).abs() < 1e-12);
        let one = aggregate_seeds(&[0.7]).unwrap();
        assert!(one.single_seed() && one.std.is_none());
        assert_eq!(aggregate_seeds(&[2.0; 4]).unwrap().std, Some(0.0));
    }

    #[test]
    fn icace_of_hand_softmax() {
        // Linear head over 1-d input: logits (0, x).
        let head = ClassifierHead::from_params(crate::model::Architecture::Linear, 1, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let e = compute_icace(&head, &[0.0], &[1.0]).unwrap();
        let s = 1.0 / (1.0 + (-1f64).exp());
        assert!((e.values[1] - (s - 0.5)).abs() < 1e-12);
        assert!((e.values[0] + (s - 0.5)).abs() < 1e-12);
        assert!((e.values[1] - 0.2311).abs() < 1e-4);
    }
}
