//! Linear hinge-loss SVM trained by plain SGD with the "optimal" learning
//! rate schedule, L2 penalty and loss-plateau stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::linalg::dot;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_iter_no_change: usize,
    /// Share of rows held out to score the separator.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            alpha: 0.01,
            tol: 1e-3,
            max_iter: 1000,
            n_iter_no_change: 5,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSeparator {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
}

impl LinearSeparator {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn accuracy(&self, features: &FeatureMatrix, rows: &[usize], labels: &[bool]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .iter()
            .filter(|&&i| (self.margin(features.row(i)) > 0.0) == labels[i])
            .count();
        hits as f64 / rows.len() as f64
    }
}

/// Fits on `rows` of `features`; `labels[i]` is the class of row `i`.
pub fn fit_svm(
    features: &FeatureMatrix,
    rows: &[usize],
    labels: &[bool],
    config: &SvmConfig,
    stream: &str,
) -> Result<LinearSeparator> {
    let positives = rows.iter().filter(|&&i| labels[i]).count();
    if positives == 0 || positives == rows.len() {
        return Err(Error::Fit("separator needs both classes present".into()));
    }
    let alpha = config.alpha;
    let typw = (1.0 / alpha.sqrt()).sqrt();
    // Hinge loss derivative at (-typw, +1) is -1, so eta0 = typw.
    let eta0 = typw;
    let t0 = 1.0 / (eta0 * alpha);

    let mut rng = substream(config.seed, stream);
    let mut order = rows.to_vec();
    let mut w = vec![0.0; features.dim()];
    let mut b = 0.0;
    let mut t = 1.0;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut epochs = 0;
    for _ in 0..config.max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut sumloss = 0.0;
        for &i in &order {
            let x = features.row(i);
            let y = if labels[i] { 1.0 } else { -1.0 };
            let eta = 1.0 / (alpha * (t0 + t - 1.0));
            let p = dot(&w, x) + b;
            let z = p * y;
            sumloss += (1.0 - z).max(0.0);
            let scale = (1.0 - eta * alpha).max(0.0);
            w.iter_mut().for_each(|v| *v *= scale);
            if z <= 1.0 {
                let update = eta * y;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += update * xj;
                }
                b += update;
            }
            t += 1.0;
        }
        if !sumloss.is_finite() {
            return Err(Error::Divergence {
                epoch: epochs - 1,
                message: "separator loss became non-finite".into(),
            });
        }
        if sumloss > best - config.tol * order.len() as f64 {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(sumloss);
        if stale >= config.n_iter_no_change {
            break;
        }
    }
    Ok(LinearSeparator { weights: w, bias: b, epochs })
}

/// Deterministic train/held-out split of `rows`.
pub fn holdout_split(rows: &[usize], fraction: f64, seed: u64, stream: &str) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut substream(seed, stream));
    let n_hold = ((rows.len() as f64) * fraction).round() as usize;
    let n_hold = n_hold.min(rows.len().saturating_sub(2));
    let held = shuffled.split_off(rows.len() - n_hold);
    (shuffled, held)
}

/// Accuracy of always predicting the more frequent class.
pub fn majority_rate(rows: &[usize], labels: &[bool]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let pos = rows.iter().filter(|&&i| labels[i]).count();
    pos.max(rows.len() - pos) as f64 / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_shifted_clusters() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![s + 0.01 * i as f64, 0.3, -0.2 * s]);
            labels.push(s > 0.0);
        }
        let m = FeatureMatrix::from_rows(3, rows).unwrap();
        let idx: Vec<usize> = (0..40).collect();
        let sep = fit_svm(&m, &idx, &labels, &SvmConfig::default(), "t").unwrap();
        assert_eq!(sep.accuracy(&m, &idx, &labels), 1.0);
        let again = fit_svm(&m, &idx, &labels, &SvmConfig::default(), "t").unwrap();
        assert_eq!(sep, again);
    }

    #[test]
    fn single_class_is_fit_error() {
        let m = FeatureMatrix::from_rows(1, vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(fit_svm(&m, &[0, 1], &[true, true], &SvmConfig::default(), "t"), Err(Error::Fit(_))));
    }
}
