use serde::{Deserialize, Serialize};

use super::{EffectVector, Estimate, Explainer, Query};
use crate::corpus::{AspectName, ConceptValue};
use crate::{Error, Result};

/// Difference of mean model outputs between the subsets of a reference set
/// labeled `c'` and `c` for the concept. Ignores the query input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConexpExplainer {
    classes: usize,
    /// `means[aspect][value]`, `None` for empty cells.
    means: Vec<Vec<Option<Vec<f64>>>>,
    counts: Vec<Vec<usize>>,
}

impl ConexpExplainer {
    /// `outputs[i]` is the model output for a reference item whose aspect
    /// majority labels are `labels[i]` (`None` = unlabeled or no majority).
    pub fn fit(outputs: &[Vec<f64>], labels: &[[Option<ConceptValue>; 4]]) -> Result<Self> {
        let classes = outputs.first().map(Vec::len).ok_or_else(|| Error::contract("reference set is empty"))?;
        let mut sums = vec![vec![vec![0.0; classes]; 3]; 4];
        let mut counts = vec![vec![0usize; 3]; 4];
        for (out, lab) in outputs.iter().zip(labels) {
            for (a, v) in lab.iter().enumerate() {
                if let Some(v) = v {
                    counts[a][v.index()] += 1;
                    for (s, o) in sums[a][v.index()].iter_mut().zip(out) {
                        *s += o;
                    }
                }
            }
        }
        let means = sums
            .into_iter()
            .zip(&counts)
            .map(|(per_value, n)| {
                per_value
                    .into_iter()
                    .zip(n)
                    .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
                    .collect()
            })
            .collect();
        Ok(ConexpExplainer { classes, means, counts })
    }

    pub fn count(&self, concept: AspectName, value: ConceptValue) -> usize {
        self.counts[concept.index()][value.index()]
    }

    pub fn estimate(&self, concept: AspectName, from: ConceptValue, to: ConceptValue) -> Result<EffectVector> {
        if from == to {
            return Ok(EffectVector::zeros(self.classes));
        }
        let cell = |v: ConceptValue| {
            self.means[concept.index()][v.index()].as_ref().ok_or_else(|| {
                Error::Undefined(format!("no reference items with {}={}", concept.as_str(), v.as_str()))
            })
        };
        Ok(EffectVector::difference(cell(to)?, cell(from)?))
    }
}

impl Explainer for ConexpExplainer {
    fn name(&self) -> &str {
        "conexp"
    }

    fn uses_test_time_labels(&self) -> bool {
        true
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        match self.estimate(q.concept, q.from, q.to) {
            Ok(e) => Ok(Estimate::effect(e)),
            Err(Error::Undefined(msg)) => Ok(Estimate::Unavailable(msg)),
            Err(e) => Err(e),
        }
    }
}
