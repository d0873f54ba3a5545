#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;

use cebab_core::corpus::{load_corpus, Corpus, SchemaMap};
use cebab_core::model::{Architecture, ClassifierHead};
use cebab_core::rng::Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cebab_mini")
}

pub fn fixture() -> Corpus {
    load_corpus(&fixture_dir(), &SchemaMap::default()).unwrap()
}

pub fn gaussian(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random head with Gaussian parameters and a Gaussian input.
pub fn random_head_and_input(rng: &mut Rng) -> (ClassifierHead, Vec<f64>) {
    let dim = rng.random_range(1..=24);
    let classes = rng.random_range(2..=5);
    let arch = if rng.random::<bool>() {
        Architecture::Linear
    } else {
        Architecture::Mlp {
            hidden: rng.random_range(1..=16),
        }
    };
    let params = gaussian(rng, ClassifierHead::param_count(arch, dim, classes));
    let head = ClassifierHead::from_params(arch, dim, classes, params).unwrap();
    let x = gaussian(rng, dim);
    (head, x)
}

/// Central finite-difference gradient of logit `k`.
pub fn numeric_grad(head: &ClassifierHead, x: &[f64], k: usize, step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += step;
            down[i] -= step;
            let f = |v: &[f64]| head.predict_logits(v).unwrap()[k];
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

/// Richardson-extrapolated central differences, error O(step^4). Holds up on
/// saturated units where the plain difference is swamped by rounding.
pub fn numeric_grad_richardson(head: &ClassifierHead, x: &[f64], k: usize, step: f64) -> Vec<f64> {
    let coarse = numeric_grad(head, x, k, step);
    let fine = numeric_grad(head, x, k, step / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = n(a).max(n(b));
    if scale < 1e-12 {
        0.0
    } else {
        n(&diff) / scale
    }
}
