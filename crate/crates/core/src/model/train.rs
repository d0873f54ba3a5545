use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::head::{Architecture, ClassifierHead};
use crate::features::FeatureMatrix;
use crate::linalg::softmax;
use crate::rng::{substream, Rng};
use crate::{Error, Result};

/// Adam minibatch recipe. Defaults: lr 1e-3, 50 epochs, batch 256,
/// beta1 0.9, beta2 0.999.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 256,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
    /// Largest epoch-over-epoch loss increase (0 when monotone).
    pub max_loss_increase: f64,
    pub train_accuracy: f64,
}

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

/// Shuffled minibatches, reshuffled every epoch from the `batch_order`
/// substream of `seed`.
pub struct Batches {
    order: Vec<usize>,
    rng: Rng,
    batch_size: usize,
}

impl Batches {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Batches {
            order: (0..n).collect(),
            rng: substream(seed, "batch_order"),
            batch_size: batch_size.max(1),
        }
    }

    /// Batches of one epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }
}

/// Training targets: class indices, or one probability vector per row.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    Soft(&'a FeatureMatrix),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Hard(l) => l.len(),
            Targets::Soft(m) => m.rows(),
        }
    }

    /// Cross-entropy of `proba` against row `i`; writes `proba - target` into
    /// `dlogits`.
    fn loss_grad(&self, i: usize, proba: &[f64], dlogits: &mut [f64]) -> f64 {
        dlogits.copy_from_slice(proba);
        match self {
            Targets::Hard(labels) => {
                let y = labels[i];
                dlogits[y] -= 1.0;
                -safe_ln(proba[y])
            }
            Targets::Soft(m) => {
                let t = m.row(i);
                let mut loss = 0.0;
                for ((d, ti), p) in dlogits.iter_mut().zip(t).zip(proba) {
                    *d -= ti;
                    if *ti > 0.0 {
                        loss -= ti * safe_ln(*p);
                    }
                }
                loss
            }
        }
    }
}

/// `ln` floored at `ln(1e-300)`; NaN stays NaN so divergence is caught.
pub(crate) fn safe_ln(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        p.max(1e-300).ln()
    }
}

pub(crate) fn check_finite_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch,
            message: format!("loss became {loss}"),
        })
    }
}

/// Mean cross-entropy of a head over a dataset.
pub fn mean_loss(head: &ClassifierHead, features: &FeatureMatrix, targets: Targets<'_>) -> f64 {
    let mut d = vec![0.0; head.classes()];
    let mut total = 0.0;
    for (i, x) in features.iter().enumerate() {
        let p = softmax(&head.forward(x).logits);
        total += targets.loss_grad(i, &p, &mut d);
    }
    total / features.rows().max(1) as f64
}

pub(crate) fn loss_report(history: Vec<f64>, train_accuracy: f64) -> TrainReport {
    let max_loss_increase = history
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    TrainReport {
        loss_history: history,
        max_loss_increase,
        train_accuracy,
    }
}

/// Continues training `head` in place with Adam on cross-entropy.
pub fn fit_head(
    head: &mut ClassifierHead,
    features: &FeatureMatrix,
    targets: Targets<'_>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::contract("training set is empty"));
    }
    if targets.len() != n {
        return Err(Error::contract(format!(
            "{} targets for {n} feature rows",
            targets.len()
        )));
    }
    if features.dim() != head.input_dim() {
        return Err(Error::contract(format!(
            "feature dim {} does not match head input dim {}",
            features.dim(),
            head.input_dim()
        )));
    }
    match targets {
        Targets::Hard(labels) => {
            if let Some(bad) = labels.iter().find(|l| **l >= head.classes()) {
                return Err(Error::contract(format!("label {bad} outside 0..{}", head.classes())));
            }
        }
        Targets::Soft(m) => {
            if m.dim() != head.classes() {
                return Err(Error::contract("soft target width differs from class count"));
            }
        }
    }

    let mut adam = Adam::new(head.params().len(), config);
    let mut grad = vec![0.0; head.params().len()];
    let mut dlogits = vec![0.0; head.classes()];
    let mut batches = Batches::new(n, config.batch_size, config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for batch in batches.epoch() {
            grad.fill(0.0);
            for &i in &batch {
                let x = features.row(i);
                let fwd = head.forward(x);
                let p = softmax(&fwd.logits);
                targets.loss_grad(i, &p, &mut dlogits);
                head.backward(x, &fwd, &dlogits, Some(&mut grad), None);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(head.params_mut(), &grad);
        }
        let loss = mean_loss(head, features, targets);
        check_finite_loss(loss, epoch)?;
        history.push(loss);
    }
    let accuracy = match targets {
        Targets::Hard(labels) => accuracy(head, features, labels),
        Targets::Soft(m) => {
            let gold: Vec<usize> = m.iter().map(crate::linalg::argmax).collect();
            accuracy(head, features, &gold)
        }
    };
    Ok(loss_report(history, accuracy))
}

/// Trains a freshly initialized head; initialization uses the `head_init`
/// substream of the config seed.
pub fn train_head(
    features: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
    architecture: Architecture,
    config: &TrainConfig,
) -> Result<(ClassifierHead, TrainReport)> {
    if classes < 2 {
        return Err(Error::contract("a classifier needs at least two classes"));
    }
    let mut rng = substream(config.seed, "head_init");
    let mut head = ClassifierHead::init(architecture, features.dim(), classes, &mut rng);
    let report = fit_head(&mut head, features, Targets::Hard(labels), config)?;
    Ok((head, report))
}

pub fn accuracy(head: &ClassifierHead, features: &FeatureMatrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = features
        .iter()
        .zip(labels)
        .filter(|(x, y)| crate::linalg::argmax(&head.forward(x).logits) == **y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Unweighted mean of per-class F1 over classes present in gold or
/// predictions.
pub fn macro_f1(predicted: &[usize], gold: &[usize], classes: usize) -> f64 {
    let mut f1s = Vec::new();
    for c in 0..classes {
        let tp = predicted.iter().zip(gold).filter(|(p, g)| **p == c && **g == c).count() as f64;
        let fp = predicted.iter().zip(gold).filter(|(p, g)| **p == c && **g != c).count() as f64;
        let fneg = predicted.iter().zip(gold).filter(|(p, g)| **p != c && **g == c).count() as f64;
        if tp + fp + fneg == 0.0 {
            continue;
        }
        f1s.push(2.0 * tp / (2.0 * tp + fp + fneg));
    }
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }
}
