use rand::Rng as _;
use rand_distr::Exp1;

use super::{EffectVector, Estimate, Explainer, Query};
use crate::rng::substream_indexed;
use crate::{Error, Result};

/// Test-only explainer returning the observed effect of the true edit.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleExplainer;

impl Explainer for OracleExplainer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        let edit = q
            .edit_output
            .ok_or_else(|| Error::contract("oracle explainer needs the counterfactual output"))?;
        Ok(Estimate::effect(EffectVector::difference(edit, q.base_output)))
    }
}

/// Difference of two independent uniform draws from the probability simplex.
#[derive(Clone, Debug)]
pub struct RandomExplainer {
    pub seed: u64,
    pub classes: usize,
}

impl RandomExplainer {
    pub fn new(seed: u64, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::contract("random explainer needs K >= 2"));
        }
        Ok(RandomExplainer { seed, classes })
    }

    /// Deterministic in `(seed, index)`.
    pub fn draw(&self, index: u64) -> EffectVector {
        let mut rng = substream_indexed(self.seed, "random_explainer", index);
        let mut simplex = || {
            let g: Vec<f64> = (0..self.classes).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = g.iter().sum();
            g.into_iter().map(|v| v / total).collect::<Vec<f64>>()
        };
        let a = simplex();
        let b = simplex();
        EffectVector::difference(&a, &b)
    }
}

impl Explainer for RandomExplainer {
    fn name(&self) -> &str {
        "random"
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        Ok(Estimate::effect(self.draw(q.index)))
    }
}
