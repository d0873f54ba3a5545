use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Applicability, EffectVector, Estimate, Explainer, Query};
use crate::corpus::{AspectName, ConceptValue};
use crate::features::FeatureMatrix;
use crate::linalg::{matvec, softmax};
use crate::model::{
    accuracy, check_finite_loss, train_head, Adam, Architecture, Batches, ClassifierHead, TrainConfig,
};
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CausalmConfig {
    pub representation_dim: usize,
    /// Weight of the reversed gradient from the treatment adversary.
    pub lambda: f64,
    pub encoder_train: TrainConfig,
    /// Recipe for the counterfactual head trained on the frozen encoder.
    pub head_train: TrainConfig,
    pub head_architecture: Architecture,
    pub probe_holdout: f64,
}

impl Default for CausalmConfig {
    fn default() -> Self {
        CausalmConfig {
            representation_dim: 64,
            lambda: 0.1,
            encoder_train: TrainConfig::default(),
            head_train: TrainConfig::default(),
            head_architecture: Architecture::default(),
            probe_holdout: 0.2,
        }
    }
}

/// Association between two categorical label columns over rows where both
/// are present.
pub fn cramers_v(a: &[Option<ConceptValue>], b: &[Option<ConceptValue>]) -> f64 {
    let mut table = [[0f64; 3]; 3];
    let mut n = 0.0;
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            table[x.index()][y.index()] += 1.0;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..3).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
    }
    let r = rows.iter().filter(|v| **v > 0.0).count();
    let c = cols.iter().filter(|v| **v > 0.0).count();
    let k = r.min(c);
    if k < 2 {
        return 0.0;
    }
    (chi2 / (n * (k - 1) as f64)).sqrt()
}

/// Affine feature encoder trained to keep the task and a control concept
/// predictable while an adversary, through a reversed gradient, fails to
/// recover the treatment concept. `head` is the counterfactual model over
/// the encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalmEncoder {
    pub treatment: AspectName,
    pub control: Option<AspectName>,
    pub lambda: f64,
    input_dim: usize,
    output_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    pub head: ClassifierHead,
    pub treatment_probe_accuracy: f64,
    pub treatment_majority_rate: f64,
    pub control_probe_accuracy: Option<f64>,
    pub control_majority_rate: Option<f64>,
}

impl CausalmEncoder {
    /// Identity encoder paired with `head`.
    pub fn identity(treatment: AspectName, head: ClassifierHead) -> Self {
        let h = head.input_dim();
        let mut weights = vec![0.0; h * h];
        for i in 0..h {
            weights[i * h + i] = 1.0;
        }
        CausalmEncoder {
            treatment,
            control: None,
            lambda: 0.0,
            input_dim: h,
            output_dim: h,
            weights,
            bias: vec![0.0; h],
            head,
            treatment_probe_accuracy: f64::NAN,
            treatment_majority_rate: f64::NAN,
            control_probe_accuracy: None,
            control_majority_rate: None,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        let mut wx = vec![0.0; self.output_dim];
        matvec(&self.weights, self.input_dim, x, &mut wx);
        z.iter_mut().zip(wx).for_each(|(a, b)| *a += b);
        z
    }

    pub fn encode_all(&self, features: &FeatureMatrix) -> FeatureMatrix {
        features.map_rows(self.output_dim, |x, out| out.copy_from_slice(&self.encode(x)))
    }

    pub fn estimate(&self, x: &[f64], base_output: &[f64]) -> Result<EffectVector> {
        if x.len() != self.input_dim {
            return Err(Error::contract("feature dim does not match encoder input"));
        }
        let after = self.head.predict_proba(&self.encode(x))?;
        Ok(EffectVector::difference(&after, base_output))
    }
}

fn label_column(labels: &[[Option<ConceptValue>; 4]], a: AspectName) -> Vec<Option<ConceptValue>> {
    labels.iter().map(|l| l[a.index()]).collect()
}

/// Remaining aspect most associated with the treatment (Cramér's V).
pub fn choose_control(labels: &[[Option<ConceptValue>; 4]], treatment: AspectName) -> Option<AspectName> {
    let t = label_column(labels, treatment);
    let mut best: Option<(AspectName, f64)> = None;
    for a in AspectName::ALL.into_iter().filter(|a| *a != treatment) {
        let v = cramers_v(&t, &label_column(labels, a));
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best.filter(|(_, v)| *v > 0.0).map(|(a, _)| a)
}

/// Held-out accuracy of a fresh linear probe for `column` on `encoded`, and
/// the majority-class rate of the held-out rows.
fn probe(encoded: &FeatureMatrix, column: &[Option<ConceptValue>], holdout: f64, seed: u64) -> Result<(f64, f64)> {
    let rows: Vec<usize> = (0..column.len()).filter(|i| column[*i].is_some()).collect();
    let (fit_rows, held) = super::svm::holdout_split(&rows, holdout, seed, "causalm_probe");
    let y = |rs: &[usize]| -> Vec<usize> { rs.iter().map(|&i| column[i].unwrap().index()).collect() };
    let (fit_y, held_y) = (y(&fit_rows), y(&held));
    let cfg = TrainConfig::default().with_seed(seed);
    let (head, _) = train_head(&encoded.select(&fit_rows), &fit_y, 3, Architecture::Linear, &cfg)?;
    let acc = accuracy(&head, &encoded.select(&held), &held_y);
    let mut counts = [0usize; 3];
    held_y.iter().for_each(|c| counts[*c] += 1);
    let majority = *counts.iter().max().unwrap() as f64 / held_y.len().max(1) as f64;
    Ok((acc, majority))
}

struct Grads {
    w: Vec<f64>,
    b: Vec<f64>,
    main: Vec<f64>,
    adv: Vec<f64>,
    ctrl: Vec<f64>,
}

/// Trains the encoder and then the counterfactual head on frozen encodings.
/// `labels` are task classes, `aspects` the per-row aspect majorities.
pub fn fit_causalm(
    features: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
    aspects: &[[Option<ConceptValue>; 4]],
    treatment: AspectName,
    config: &CausalmConfig,
) -> Result<CausalmEncoder> {
    let n = features.rows();
    if n == 0 || labels.len() != n || aspects.len() != n {
        return Err(Error::contract("CausaLM inputs must be nonempty and aligned"));
    }
    let control = choose_control(aspects, treatment);
    let (h, r) = (features.dim(), config.representation_dim);
    let seed = config.encoder_train.seed;

    let mut rng = substream(seed, "causalm_encoder");
    let a = (6.0 / (h + r) as f64).sqrt();
    let mut w: Vec<f64> = (0..h * r).map(|_| rng.random_range(-a..a)).collect();
    let mut b = vec![0.0; r];
    let mut main = ClassifierHead::init(Architecture::Linear, r, classes, &mut rng);
    let mut adv = ClassifierHead::init(Architecture::Linear, r, 3, &mut rng);
    let mut ctrl = ClassifierHead::init(Architecture::Linear, r, 3, &mut rng);

    let tc = &config.encoder_train;
    let mut opt_w = Adam::new(w.len(), tc);
    let mut opt_b = Adam::new(r, tc);
    let mut opt_main = Adam::new(main.params().len(), tc);
    let mut opt_adv = Adam::new(adv.params().len(), tc);
    let mut opt_ctrl = Adam::new(ctrl.params().len(), tc);
    let mut g = Grads {
        w: vec![0.0; w.len()],
        b: vec![0.0; r],
        main: vec![0.0; main.params().len()],
        adv: vec![0.0; adv.params().len()],
        ctrl: vec![0.0; ctrl.params().len()],
    };
    let tcol = label_column(aspects, treatment);
    let ccol = control.map(|c| label_column(aspects, c));
    let mut batches = Batches::new(n, tc.batch_size, seed);
    let mut z = vec![0.0; r];
    let mut dz = vec![0.0; r];
    let mut dz_part = vec![0.0; r];

    for epoch in 0..tc.epochs {
        let mut epoch_loss = 0.0;
        for batch in batches.epoch() {
            g.w.fill(0.0);
            g.b.fill(0.0);
            g.main.fill(0.0);
            g.adv.fill(0.0);
            g.ctrl.fill(0.0);
            for &i in &batch {
                let x = features.row(i);
                matvec(&w, h, x, &mut z);
                z.iter_mut().zip(&b).for_each(|(zi, bi)| *zi += bi);
                dz.fill(0.0);

                let mut head_step = |head: &ClassifierHead, grad: &mut [f64], y: usize, weight: f64, dz: &mut [f64]| {
                    let fwd = head.forward(&z);
                    let mut d = softmax(&fwd.logits);
                    let loss = -crate::model::safe_ln(d[y]);
                    d[y] -= 1.0;
                    head.backward(&z, &fwd, &d, Some(grad), Some(&mut dz_part));
                    for (a, p) in dz.iter_mut().zip(&dz_part) {
                        *a += weight * p;
                    }
                    loss
                };
                epoch_loss += head_step(&main, &mut g.main, labels[i], 1.0, &mut dz);
                if let Some(t) = tcol[i] {
                    head_step(&adv, &mut g.adv, t.index(), -config.lambda, &mut dz);
                }
                if let Some(c) = ccol.as_ref().and_then(|col| col[i]) {
                    head_step(&ctrl, &mut g.ctrl, c.index(), 1.0, &mut dz);
                }
                for (row, d) in g.w.chunks_exact_mut(h).zip(&dz) {
                    if *d != 0.0 {
                        crate::linalg::axpy(*d, x, row);
                    }
                }
                g.b.iter_mut().zip(&dz).for_each(|(gb, d)| *gb += d);
            }
            let s = 1.0 / batch.len() as f64;
            for v in [&mut g.w, &mut g.b, &mut g.main, &mut g.adv, &mut g.ctrl] {
                v.iter_mut().for_each(|x| *x *= s);
            }
            opt_w.step(&mut w, &g.w);
            opt_b.step(&mut b, &g.b);
            opt_main.step(main.params_mut(), &g.main);
            opt_adv.step(adv.params_mut(), &g.adv);
            opt_ctrl.step(ctrl.params_mut(), &g.ctrl);
        }
        check_finite_loss(epoch_loss / n as f64, epoch)?;
    }
    let quantize = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = *x as f32 as f64);
    quantize(&mut w);
    quantize(&mut b);

    let mut enc = CausalmEncoder {
        treatment,
        control,
        lambda: config.lambda,
        input_dim: h,
        output_dim: r,
        weights: w,
        bias: b,
        head: ClassifierHead::zeros(Architecture::Linear, r, classes),
        treatment_probe_accuracy: 0.0,
        treatment_majority_rate: 0.0,
        control_probe_accuracy: None,
        control_majority_rate: None,
    };
    let encoded = enc.encode_all(features);
    let (mut head, _) = train_head(&encoded, labels, classes, config.head_architecture, &config.head_train)?;
    head.quantize_f32();
    enc.head = head;
    let (acc, maj) = probe(&encoded, &tcol, config.probe_holdout, seed)?;
    enc.treatment_probe_accuracy = acc;
    enc.treatment_majority_rate = maj;
    if let Some(col) = &ccol {
        let (acc, maj) = probe(&encoded, col, config.probe_holdout, seed)?;
        enc.control_probe_accuracy = Some(acc);
        enc.control_majority_rate = Some(maj);
    }
    Ok(enc)
}

/// `N'(phi_CF(x)) - N(x)` with one encoder per aspect; toward Unknown only.
#[derive(Clone, Debug)]
pub struct CausalmExplainer {
    encoders: Vec<CausalmEncoder>,
}

impl CausalmExplainer {
    pub fn new(encoders: Vec<CausalmEncoder>) -> Result<Self> {
        if encoders.len() != 4 || encoders.iter().enumerate().any(|(i, e)| e.treatment.index() != i) {
            return Err(Error::contract("CausaLM needs one encoder per aspect in aspect order"));
        }
        Ok(CausalmExplainer { encoders })
    }

    pub fn encoder(&self, aspect: AspectName) -> &CausalmEncoder {
        &self.encoders[aspect.index()]
    }
}

impl Explainer for CausalmExplainer {
    fn name(&self) -> &str {
        "causalm"
    }

    fn applicability(&self) -> Applicability {
        Applicability::TowardUnknown
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        if q.to != ConceptValue::Unknown {
            return Ok(Estimate::NotApplicable);
        }
        Ok(Estimate::effect(self.encoders[q.concept.index()].estimate(q.base_features, q.base_output)?))
    }
}
