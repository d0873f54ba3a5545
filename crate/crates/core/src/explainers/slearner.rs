use super::{EffectVector, Estimate, Explainer, Query};
use crate::corpus::ConceptValue;
use crate::features::FeatureMatrix;
use crate::model::{fit_head, Architecture, ClassifierHead, Targets, TrainConfig, TrainReport};
use crate::{Error, Result};

/// One-hot encoding of four aspect labels (three slots per aspect, in
/// value order); an absent label leaves its block zero.
pub fn encode_labels(labels: &[Option<ConceptValue>; 4]) -> Vec<f64> {
    let mut x = vec![0.0; 12];
    for (a, v) in labels.iter().enumerate() {
        if let Some(v) = v {
            x[3 * a + v.index()] = 1.0;
        }
    }
    x
}

/// Multinomial logistic model of the explained model's output given the
/// concept labels; effects are differences of its predictions under two
/// settings of one concept.
#[derive(Clone, Debug)]
pub struct SLearnerExplainer {
    head: ClassifierHead,
}

impl SLearnerExplainer {
    /// `outputs[i]` is the model output for an item labeled `labels[i]`.
    /// Starts from zero weights.
    pub fn fit(
        labels: &[[Option<ConceptValue>; 4]],
        outputs: &FeatureMatrix,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let x = FeatureMatrix::from_rows(12, labels.iter().map(encode_labels))?;
        let mut head = ClassifierHead::zeros(Architecture::Linear, 12, outputs.dim());
        let report = fit_head(&mut head, &x, Targets::Soft(outputs), config)?;
        head.quantize_f32();
        Ok((SLearnerExplainer { head }, report))
    }

    pub fn from_head(head: ClassifierHead) -> Result<Self> {
        if head.input_dim() != 12 {
            return Err(Error::contract("s-learner head takes the 12-dim label encoding"));
        }
        Ok(SLearnerExplainer { head })
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn predict(&self, labels: &[Option<ConceptValue>; 4]) -> Vec<f64> {
        self.head.predict_proba(&encode_labels(labels)).expect("12-dim input")
    }
}

impl Explainer for SLearnerExplainer {
    fn name(&self) -> &str {
        "slearner"
    }

    fn uses_test_time_labels(&self) -> bool {
        true
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        let base = q
            .base_labels
            .ok_or_else(|| Error::contract("s-learner needs predicted base labels"))?;
        let mut labels = base.map(Some);
        let a = q.concept.index();
        labels[a] = Some(q.to);
        let after = self.predict(&labels);
        labels[a] = Some(q.from);
        let before = self.predict(&labels);
        Ok(Estimate::effect(EffectVector::difference(&after, &before)))
    }
}
