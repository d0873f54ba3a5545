use serde::{Deserialize, Serialize};

use super::svm::{fit_svm, holdout_split, majority_rate, SvmConfig};
use super::{Applicability, EffectVector, Estimate, Explainer, Query};
use crate::corpus::{AspectName, ConceptValue};
use crate::features::FeatureMatrix;
use crate::linalg::{axpy, dot, norm};
use crate::model::{decode_artifact, encode_artifact, fit_head, ClassifierHead, Targets, TrainConfig};
use crate::{Error, Result};

pub const PROJECTION_MAGIC: &[u8; 4] = b"CEBP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InlpConfig {
    pub iterations: usize,
    pub svm: SvmConfig,
    /// Recipe for adapting the model to projected features.
    pub finetune: TrainConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig {
            iterations: 10,
            svm: SvmConfig::default(),
            finetune: TrainConfig {
                learning_rate: 2e-5,
                epochs: 5,
                batch_size: 32,
                ..TrainConfig::default()
            },
        }
    }
}

/// Orthogonal projection onto the complement of the removed directions,
/// `P = I - Q^T Q` with the rows of `Q` orthonormal. Stored as `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct InlpProjection {
    pub aspect: AspectName,
    pub dim: usize,
    basis: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Held-out accuracy of a separator trained after 0, 1, ..., iterations
    /// projections.
    pub probe_accuracy: Vec<f64>,
    pub majority_baseline: f64,
    /// Separator weights of each iteration, before orthogonalization.
    pub separators: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionHeader {
    aspect: AspectName,
    dim: usize,
    rank_removed: usize,
    iterations: usize,
    probe_accuracy: Vec<f64>,
    majority_baseline: f64,
}

impl InlpProjection {
    pub fn identity(aspect: AspectName, dim: usize) -> Self {
        InlpProjection {
            aspect,
            dim,
            basis: Vec::new(),
            iterations: 0,
            probe_accuracy: Vec::new(),
            majority_baseline: 0.0,
            separators: Vec::new(),
        }
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.dim - self.basis.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        for u in &self.basis {
            let c = dot(u, x);
            axpy(-c, u, x);
        }
    }

    pub fn apply_all(&self, features: &FeatureMatrix) -> FeatureMatrix {
        features.map_rows(self.dim, |x, out| {
            out.copy_from_slice(x);
            self.apply_in_place(out);
        })
    }

    /// Dense row-major `P`; refuses dimensions above 4096.
    pub fn matrix(&self) -> Result<Vec<f64>> {
        if self.dim > 4096 {
            return Err(Error::contract("dense projection requested for a large dimension"));
        }
        let h = self.dim;
        let mut p = vec![0.0; h * h];
        for i in 0..h {
            p[i * h + i] = 1.0;
        }
        for u in &self.basis {
            for i in 0..h {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..h {
                    p[i * h + j] -= u[i] * u[j];
                }
            }
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ProjectionHeader {
            aspect: self.aspect,
            dim: self.dim,
            rank_removed: self.basis.len(),
            iterations: self.iterations,
            probe_accuracy: self.probe_accuracy.clone(),
            majority_baseline: self.majority_baseline,
        };
        let payload: Vec<f64> = self.basis.iter().flatten().copied().collect();
        encode_artifact(PROJECTION_MAGIC, &header, &payload)
    }

    /// Loaded bases are re-orthonormalized after the f32 round trip.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (ProjectionHeader, _) =
            decode_artifact(PROJECTION_MAGIC, bytes, |h: &ProjectionHeader| h.dim * h.rank_removed)?;
        let mut p = InlpProjection::identity(h.aspect, h.dim);
        p.iterations = h.iterations;
        p.probe_accuracy = h.probe_accuracy;
        p.majority_baseline = h.majority_baseline;
        if h.dim > 0 {
            for row in payload.chunks_exact(h.dim) {
                p.add_direction(row);
            }
        }
        Ok(p)
    }

    /// Orthogonalizes `w` against the basis and appends it; returns false
    /// when nothing is left of it.
    fn add_direction(&mut self, w: &[f64]) -> bool {
        let scale = norm(w);
        if scale == 0.0 {
            return false;
        }
        let mut u = w.to_vec();
        for _ in 0..2 {
            self.apply_in_place(&mut u);
        }
        let n = norm(&u);
        if n <= 1e-8 * scale {
            return false;
        }
        u.iter_mut().for_each(|v| *v /= n);
        self.basis.push(u);
        true
    }
}

/// Repeatedly fits a concept separator and projects the features onto its
/// nullspace.
pub fn fit_inlp(
    features: &FeatureMatrix,
    presence: &[Option<bool>],
    aspect: AspectName,
    config: &InlpConfig,
) -> Result<InlpProjection> {
    if presence.len() != features.rows() {
        return Err(Error::contract("presence labels and features differ in length"));
    }
    let rows: Vec<usize> = (0..presence.len()).filter(|i| presence[*i].is_some()).collect();
    let labels: Vec<bool> = presence.iter().map(|p| p.unwrap_or(false)).collect();
    let stream = format!("inlp/{}", aspect.as_str());
    let (fit_rows, held) = holdout_split(&rows, config.svm.holdout_fraction, config.svm.seed, &stream);

    let mut projection = InlpProjection::identity(aspect, features.dim());
    projection.iterations = config.iterations;
    projection.majority_baseline = majority_rate(&held, &labels);
    let mut work = features.select(&rows);
    let position = |global: &[usize]| -> Vec<usize> {
        global.iter().map(|g| rows.binary_search(g).expect("labeled row")).collect()
    };
    let (fit_local, held_local) = (position(&fit_rows), position(&held));
    let local_labels: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();

    for it in 0..=config.iterations {
        let sep = fit_svm(&work, &fit_local, &local_labels, &config.svm, &format!("{stream}/{it}"))
            .map_err(|e| Error::Fit(format!("INLP iteration {it} for {}: {e}", aspect.as_str())))?;
        projection.probe_accuracy.push(sep.accuracy(&work, &held_local, &local_labels));
        if it == config.iterations {
            break;
        }
        let before = projection.basis.len();
        projection.add_direction(&sep.weights);
        projection.separators.push(sep.weights);
        if projection.basis.len() > before {
            let u = projection.basis.last().unwrap().clone();
            work = work.map_rows(work.dim(), |x, out| {
                out.copy_from_slice(x);
                let c = dot(&u, out);
                axpy(-c, &u, out);
            });
        }
    }
    Ok(projection)
}

/// Model output after removing the concept by projection:
/// `N'(P x) - N(x)`, defined only toward Unknown.
#[derive(Clone, Debug)]
pub struct InlpExplainer {
    projections: Vec<InlpProjection>,
    heads: Vec<ClassifierHead>,
}

impl InlpExplainer {
    pub fn from_parts(projections: Vec<InlpProjection>, heads: Vec<ClassifierHead>) -> Result<Self> {
        if projections.len() != 4 || heads.len() != 4 {
            return Err(Error::contract("INLP needs one projection and head per aspect"));
        }
        for (i, p) in projections.iter().enumerate() {
            if p.aspect.index() != i {
                return Err(Error::contract("INLP projections must be in aspect order"));
            }
        }
        Ok(InlpExplainer { projections, heads })
    }

    /// Fits one projection per aspect and adapts a copy of `model` to each
    /// projected feature space on `(features, labels)`.
    pub fn fit(
        model: &ClassifierHead,
        features: &FeatureMatrix,
        labels: &[usize],
        presence: &[Vec<Option<bool>>; 4],
        config: &InlpConfig,
    ) -> Result<Self> {
        let mut projections = Vec::with_capacity(4);
        let mut heads = Vec::with_capacity(4);
        for aspect in AspectName::ALL {
            let p = fit_inlp(features, &presence[aspect.index()], aspect, config)?;
            let projected = p.apply_all(features);
            let mut head = model.clone();
            let cfg = config.finetune.clone();
            fit_head(&mut head, &projected, Targets::Hard(labels), &cfg)?;
            head.quantize_f32();
            projections.push(p);
            heads.push(head);
        }
        Self::from_parts(projections, heads)
    }

    pub fn projection(&self, aspect: AspectName) -> &InlpProjection {
        &self.projections[aspect.index()]
    }

    pub fn head(&self, aspect: AspectName) -> &ClassifierHead {
        &self.heads[aspect.index()]
    }

    pub fn estimate(&self, x: &[f64], base_output: &[f64], aspect: AspectName) -> Result<EffectVector> {
        let projected = self.projections[aspect.index()].apply(x);
        let after = self.heads[aspect.index()].predict_proba(&projected)?;
        Ok(EffectVector::difference(&after, base_output))
    }
}

impl Explainer for InlpExplainer {
    fn name(&self) -> &str {
        "inlp"
    }

    fn applicability(&self) -> Applicability {
        Applicability::TowardUnknown
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        if q.to != ConceptValue::Unknown {
            return Ok(Estimate::NotApplicable);
        }
        Ok(Estimate::effect(self.estimate(q.base_features, q.base_output, q.concept)?))
    }
}
