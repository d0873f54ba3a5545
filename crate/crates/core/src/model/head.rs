use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, axpy_on, dot, dot_on, matvec_t_acc, softmax, sparse_support};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    /// One tanh hidden layer.
    Mlp { hidden: usize },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp { hidden: 64 }
    }
}

/// Map from feature vectors to class logits and probabilities.
///
/// Parameters live in one flat buffer. Linear: `W (K x h)`, `b (K)`.
/// Mlp: `W1 (H x h)`, `b1 (H)`, `W2 (K x H)`, `b2 (K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    architecture: Architecture,
    input_dim: usize,
    classes: usize,
    params: Vec<f64>,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct Forward {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(architecture: Architecture, input_dim: usize, classes: usize) -> Self {
        let n = Self::param_count(architecture, input_dim, classes);
        ClassifierHead {
            architecture,
            input_dim,
            classes,
            params: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(architecture: Architecture, input_dim: usize, classes: usize, rng: &mut Rng) -> Self {
        let mut head = Self::zeros(architecture, input_dim, classes);
        let mut fill = |slice: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in slice {
                *w = rng.random_range(-a..a);
            }
        };
        match architecture {
            Architecture::Linear => {
                let (w, _) = head.params.split_at_mut(classes * input_dim);
                fill(w, input_dim, classes);
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = head.params.split_at_mut(hidden * input_dim);
                fill(w1, input_dim, hidden);
                let (_, rest) = rest.split_at_mut(hidden);
                let (w2, _) = rest.split_at_mut(classes * hidden);
                fill(w2, hidden, classes);
            }
        }
        head
    }

    pub fn from_params(
        architecture: Architecture,
        input_dim: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::param_count(architecture, input_dim, classes);
        if params.len() != expected {
            return Err(Error::contract(format!(
                "head expects {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(ClassifierHead {
            architecture,
            input_dim,
            classes,
            params,
        })
    }

    pub fn param_count(architecture: Architecture, input_dim: usize, classes: usize) -> usize {
        match architecture {
            Architecture::Linear => classes * input_dim + classes,
            Architecture::Mlp { hidden } => hidden * input_dim + hidden + classes * hidden + classes,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Rounds every parameter to f32 precision, the precision of saved heads.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    /// Weight matrix of the output layer for a Linear head.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match self.architecture {
            Architecture::Linear => Some(&self.params[..self.classes * self.input_dim]),
            Architecture::Mlp { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::contract(format!(
                "feature dim {} does not match head input dim {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Forward {
        let (h, k) = (self.input_dim, self.classes);
        let support = sparse_support(x);
        let support = support.as_deref();
        match self.architecture {
            Architecture::Linear => {
                let (w, b) = self.params.split_at(k * h);
                let mut logits = b.to_vec();
                for (l, row) in logits.iter_mut().zip(w.chunks_exact(h)) {
                    *l += dot_on(row, x, support);
                }
                Forward {
                    hidden: Vec::new(),
                    logits,
                }
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * h);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(k * hidden);
                let mut act: Vec<f64> = w1.chunks_exact(h).map(|row| dot_on(row, x, support)).collect();
                for (a, b) in act.iter_mut().zip(b1) {
                    *a = (*a + b).tanh();
                }
                let mut logits = b2.to_vec();
                for (l, row) in logits.iter_mut().zip(w2.chunks_exact(hidden)) {
                    *l += dot(row, &act);
                }
                Forward { hidden: act, logits }
            }
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logits`,
    /// and, when `dx` is given, writes `d loss / d input` into it.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        fwd: &Forward,
        dlogits: &[f64],
        grad: Option<&mut [f64]>,
        dx: Option<&mut [f64]>,
    ) {
        let (h, k) = (self.input_dim, self.classes);
        let support = if grad.is_some() { sparse_support(x) } else { None };
        let support = support.as_deref();
        match self.architecture {
            Architecture::Linear => {
                let w = &self.params[..k * h];
                if let Some(grad) = grad {
                    let (gw, gb) = grad.split_at_mut(k * h);
                    for ((g, d), row) in gb.iter_mut().zip(dlogits).zip(gw.chunks_exact_mut(h)) {
                        *g += d;
                        if *d != 0.0 {
                            axpy_on(*d, x, row, support);
                        }
                    }
                }
                if let Some(dx) = dx {
                    dx.fill(0.0);
                    matvec_t_acc(w, h, dlogits, dx);
                }
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * h);
                let (_, rest) = rest.split_at(hidden);
                let (w2, _) = rest.split_at(k * hidden);
                let mut dact = vec![0.0; hidden];
                matvec_t_acc(w2, hidden, dlogits, &mut dact);
                let dpre: Vec<f64> = dact
                    .iter()
                    .zip(&fwd.hidden)
                    .map(|(d, a)| d * (1.0 - a * a))
                    .collect();
                if let Some(grad) = grad {
                    let (gw1, grest) = grad.split_at_mut(hidden * h);
                    let (gb1, grest) = grest.split_at_mut(hidden);
                    let (gw2, gb2) = grest.split_at_mut(k * hidden);
                    for ((g, d), row) in gb2.iter_mut().zip(dlogits).zip(gw2.chunks_exact_mut(hidden)) {
                        *g += d;
                        axpy(*d, &fwd.hidden, row);
                    }
                    for ((g, d), row) in gb1.iter_mut().zip(&dpre).zip(gw1.chunks_exact_mut(h)) {
                        *g += d;
                        if *d != 0.0 {
                            axpy_on(*d, x, row, support);
                        }
                    }
                }
                if let Some(dx) = dx {
                    dx.fill(0.0);
                    matvec_t_acc(w1, h, &dpre, dx);
                }
            }
        }
    }

    pub fn predict_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(x).logits)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.predict_logits(x)?))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::linalg::argmax(&self.predict_logits(x)?))
    }

    /// Analytic gradient of logit `k` with respect to the input features.
    pub fn grad_logit_wrt_input(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if k >= self.classes {
            return Err(Error::contract(format!("class {k} out of range {}", self.classes)));
        }
        let fwd = self.forward(x);
        let mut onehot = vec![0.0; self.classes];
        onehot[k] = 1.0;
        let mut dx = vec![0.0; self.input_dim];
        self.backward(x, &fwd, &onehot, None, Some(&mut dx));
        Ok(dx)
    }

    /// Vector-Jacobian product of the logits with respect to the input.
    pub fn input_vjp(&self, x: &[f64], dlogits: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let fwd = self.forward(x);
        let mut dx = vec![0.0; self.input_dim];
        self.backward(x, &fwd, dlogits, None, Some(&mut dx));
        Ok(dx)
    }
}
