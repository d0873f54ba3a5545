//! Explanation methods cast as estimators of the individual causal concept
//! effect: each returns an [`EffectVector`] for a query `(x, C, c, c')`.

mod approx;
mod causalm;
mod cav;
mod conceptshap;
mod conexp;
mod inlp;
mod simple;
mod slearner;
pub mod svm;

pub use approx::{ApproxConfig, ApproxExplainer, ApproxPool};
pub use causalm::{choose_control, cramers_v, fit_causalm, CausalmConfig, CausalmEncoder, CausalmExplainer};
pub use cav::{concept_presence, CAV_MAGIC, fit_cav, tcav_count, ConceptDirection, TcavExplainer};
pub use conceptshap::{
    completeness, fit_eta, shapley_weight, ConceptShapExplainer, EtaConfig, EtaHead, Subset,
};
pub use conexp::ConexpExplainer;
pub use inlp::{fit_inlp, PROJECTION_MAGIC, InlpConfig, InlpExplainer, InlpProjection};
pub use simple::{OracleExplainer, RandomExplainer};
pub use slearner::{encode_labels, SLearnerExplainer};
pub use svm::SvmConfig;

use serde::{Deserialize, Serialize};

use crate::corpus::{AspectName, ConceptValue};
use crate::model::AspectLabels;
use crate::Result;

/// Estimated change in the model's output vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectVector {
    pub values: Vec<f64>,
}

impl EffectVector {
    pub fn new(values: Vec<f64>) -> Self {
        EffectVector { values }
    }

    pub fn zeros(k: usize) -> Self {
        EffectVector { values: vec![0.0; k] }
    }

    /// `after - before`, element-wise.
    pub fn difference(after: &[f64], before: &[f64]) -> Self {
        EffectVector {
            values: after.iter().zip(before).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Outcome of one explain call.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimate {
    /// `flagged` marks estimates produced through a documented fallback.
    Effect { effect: EffectVector, flagged: bool },
    /// The method is not defined for this direction.
    NotApplicable,
    /// No estimate could be formed for this query.
    Unavailable(String),
}

impl Estimate {
    pub fn effect(effect: EffectVector) -> Self {
        Estimate::Effect { effect, flagged: false }
    }

    pub fn as_effect(&self) -> Option<&EffectVector> {
        match self {
            Estimate::Effect { effect, .. } => Some(effect),
            _ => None,
        }
    }
}

/// Everything an explainer may look at for one edit pair. Fields beyond the
/// base features exist for methods that need them (the oracle reads the
/// edit output, Approx and S-Learner read predicted aspect labels).
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    /// Position of the query in its evaluation run; seeds per-call randomness.
    pub index: u64,
    /// Stable identity of the pair, e.g. `"base_id>edit_id"`.
    pub key: &'a str,
    pub base_group: &'a str,
    pub base_features: &'a [f64],
    /// Model output on the base text.
    pub base_output: &'a [f64],
    /// Model output on the true counterfactual text.
    pub edit_output: Option<&'a [f64]>,
    pub base_labels: Option<AspectLabels>,
    pub concept: AspectName,
    pub from: ConceptValue,
    pub to: ConceptValue,
}

/// Directions a method can be evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    AllDirections,
    TowardUnknown,
}

impl Applicability {
    pub fn allows(self, to: ConceptValue) -> bool {
        match self {
            Applicability::AllDirections => true,
            Applicability::TowardUnknown => to == ConceptValue::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Applicability::AllDirections => "all",
            Applicability::TowardUnknown => "to_unknown",
        }
    }
}

pub trait Explainer: Send + Sync {
    fn name(&self) -> &str;

    fn applicability(&self) -> Applicability {
        Applicability::AllDirections
    }

    /// Whether the method reads the direction `(c, c')` and predicted labels
    /// of the query at test time.
    fn uses_test_time_labels(&self) -> bool {
        false
    }

    fn explain(&self, query: &Query<'_>) -> Result<Estimate>;
}
