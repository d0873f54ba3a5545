use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::{EffectVector, Estimate, Explainer, Query};
use crate::model::AspectLabels;
use crate::rng::substream_keyed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxConfig {
    /// Skip pool items that share the base text's original review, so the
    /// true counterfactual is never drawn.
    pub exclude_same_original: bool,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig { exclude_same_original: true }
    }
}

/// Candidate counterfactuals: model outputs with predicted aspect labels.
#[derive(Clone, Debug, Default)]
pub struct ApproxPool {
    pub outputs: Vec<Vec<f64>>,
    pub labels: Vec<AspectLabels>,
    pub groups: Vec<String>,
}

impl ApproxPool {
    pub fn push(&mut self, output: Vec<f64>, labels: AspectLabels, group: String) {
        self.outputs.push(output);
        self.labels.push(labels);
        self.groups.push(group);
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Samples a pool text whose predicted labels equal the base's with the
/// concept set to `c'`, and reports the output difference. When no item
/// matches all four labels, only the target concept is matched and the
/// estimate is flagged.
#[derive(Clone, Debug)]
pub struct ApproxExplainer {
    pool: ApproxPool,
    config: ApproxConfig,
    seed: u64,
}

impl ApproxExplainer {
    pub fn new(pool: ApproxPool, config: ApproxConfig, seed: u64) -> Self {
        ApproxExplainer { pool, config, seed }
    }
}

impl Explainer for ApproxExplainer {
    fn name(&self) -> &str {
        "approx"
    }

    fn uses_test_time_labels(&self) -> bool {
        true
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        let base = q
            .base_labels
            .ok_or_else(|| Error::contract("approx explainer needs predicted base labels"))?;
        let a = q.concept.index();
        let mut target = base;
        target[a] = q.to;
        let eligible = |i: &usize| !self.config.exclude_same_original || self.pool.groups[*i] != q.base_group;
        let exact: Vec<usize> = (0..self.pool.len())
            .filter(|i| self.pool.labels[*i] == target)
            .filter(eligible)
            .collect();
        let (candidates, flagged) = if exact.is_empty() {
            let relaxed: Vec<usize> = (0..self.pool.len())
                .filter(|i| self.pool.labels[*i][a] == q.to)
                .filter(eligible)
                .collect();
            (relaxed, true)
        } else {
            (exact, false)
        };
        let mut rng = substream_keyed(self.seed, "approx", q.key);
        match candidates.choose(&mut rng) {
            Some(&i) => Ok(Estimate::Effect {
                effect: EffectVector::difference(&self.pool.outputs[i], q.base_output),
                flagged,
            }),
            None => Ok(Estimate::Unavailable(format!(
                "no pool text predicted {}={}",
                q.concept.as_str(),
                q.to.as_str()
            ))),
        }
    }
}
