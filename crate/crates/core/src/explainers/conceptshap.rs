use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::cav::ConceptDirection;
use super::{EffectVector, Estimate, Explainer, Query};
use crate::corpus::AspectName;
use crate::features::FeatureMatrix;
use crate::linalg::{argmax, axpy, dot, dot_on, matvec, softmax, sparse_support};
use crate::model::{check_finite_loss, loss_report, Adam, Batches, ClassifierHead, TrainConfig, TrainReport};
use crate::rng::substream_indexed;
use crate::{Error, Result};

/// Set of aspects as a bitmask over aspect order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subset(pub u8);

impl Subset {
    pub const EMPTY: Subset = Subset(0);
    pub const FULL: Subset = Subset(0b1111);

    pub fn all() -> impl Iterator<Item = Subset> {
        (0u8..16).map(Subset)
    }

    pub fn contains(self, a: AspectName) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn with(self, a: AspectName) -> Subset {
        Subset(self.0 | (1 << a.index()))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn aspects(self) -> Vec<AspectName> {
        AspectName::ALL.into_iter().filter(|a| self.contains(*a)).collect()
    }
}

/// Shapley coefficient `(m - s - 1)! s! / m!`.
pub fn shapley_weight(m: usize, s: usize) -> f64 {
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    fact(m - s - 1) * fact(s) / fact(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaConfig {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig {
            hidden: 500,
            train: TrainConfig {
                learning_rate: 1e-2,
                epochs: 50,
                batch_size: 128,
                ..TrainConfig::default()
            },
        }
    }
}

/// `eta_S(x) = N(g(V_S x))`: the model applied to a reconstruction of its
/// input from the concept scores of the subset only. `g` is a ReLU
/// perceptron mapping `|S|` scores back to the feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaHead {
    pub subset: Subset,
    directions: Vec<Vec<f64>>,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    model: ClassifierHead,
}

impl EtaHead {
    /// `w1` is `hidden x |S|`, `w2` is `h x hidden`, both row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        subset: Subset,
        directions: Vec<Vec<f64>>,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
        model: ClassifierHead,
    ) -> Result<Self> {
        let (s, h) = (subset.len(), model.input_dim());
        if directions.len() != s
            || directions.iter().any(|d| d.len() != h)
            || w1.len() != hidden * s
            || b1.len() != hidden
            || w2.len() != h * hidden
            || b2.len() != h
        {
            return Err(Error::contract("eta parameter shapes do not match subset and model"));
        }
        Ok(EtaHead { subset, directions, hidden, w1, b1, w2, b2, model })
    }

    pub fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.w1, &self.b1, &self.w2, &self.b2)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.directions.iter().map(|v| dot(v, x)).collect()
    }

    fn hidden_layer(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.subset.len();
        let mut pre = self.b1.clone();
        if s > 0 {
            let mut t = vec![0.0; self.hidden];
            matvec(&self.w1, s, z, &mut t);
            pre.iter_mut().zip(t).for_each(|(p, v)| *p += v);
        }
        let act = pre.iter().map(|v| v.max(0.0)).collect();
        (pre, act)
    }

    /// `g(z)`, the reconstructed model input.
    fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let (_, act) = self.hidden_layer(z);
        let support = sparse_support(&act);
        self.w2
            .chunks_exact(self.hidden)
            .zip(&self.b2)
            .map(|(row, b)| dot_on(row, &act, support.as_deref()) + b)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.model.input_dim() {
            return Err(Error::contract("feature dim does not match eta input"));
        }
        let recon = self.reconstruct(&self.scores(x));
        Ok(softmax(&self.model.forward(&recon).logits))
    }
}

/// Row-major `rows x cols` to row-major `cols x rows`.
fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    for (r, row) in m.chunks_exact(cols).enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[c * rows + r] = *v;
        }
    }
    out
}

fn glorot(rng: &mut crate::rng::Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

/// Trains `g` so that `eta_S` reproduces the model's argmax class on
/// `features`. The model itself stays fixed.
pub fn fit_eta(
    subset: Subset,
    cavs: &[ConceptDirection],
    features: &FeatureMatrix,
    model: &ClassifierHead,
    config: &EtaConfig,
) -> Result<(EtaHead, TrainReport)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::contract("eta training set is empty"));
    }
    let directions: Vec<Vec<f64>> = subset
        .aspects()
        .into_iter()
        .map(|a| {
            cavs.iter()
                .find(|c| c.aspect == a)
                .map(|c| c.weights.clone())
                .ok_or_else(|| Error::contract(format!("missing CAV for {}", a.as_str())))
        })
        .collect::<Result<_>>()?;
    let (s, h, hid) = (subset.len(), features.dim(), config.hidden);
    let tc = &config.train;
    let mut rng = substream_indexed(tc.seed, "eta_init", subset.0 as u64);
    let w1 = glorot(&mut rng, hid * s, s.max(1), hid);
    let w2 = glorot(&mut rng, h * hid, hid, h);
    let mut eta = EtaHead::from_parts(subset, directions, hid, w1, vec![0.0; hid], w2, vec![0.0; h], model.clone())?;

    let targets: Vec<usize> = features.iter().map(|x| argmax(&model.forward(x).logits)).collect();
    let scores: Vec<Vec<f64>> = features.iter().map(|x| eta.scores(x)).collect();

    // `w2` is trained transposed (`hidden x h`) so that each sample only
    // touches the rows of its active units. Sums keep their per-element order.
    let mut w2t = transpose(&eta.w2, h, hid);
    let mut opt = [
        Adam::new(eta.w1.len(), tc),
        Adam::new(hid, tc),
        Adam::new(w2t.len(), tc),
        Adam::new(h, tc),
    ];
    let mut g = [vec![0.0; eta.w1.len()], vec![0.0; hid], vec![0.0; w2t.len()], vec![0.0; h]];
    let mut batches = Batches::new(n, tc.batch_size, tc.seed);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut dy = vec![0.0; h];
    // The recorded loss is the epoch's running loss, taken before each step.
    for epoch in 0..tc.epochs {
        let mut loss = 0.0;
        for batch in batches.epoch() {
            g.iter_mut().for_each(|v| v.fill(0.0));
            for &i in &batch {
                let z = &scores[i];
                let (pre, act) = eta.hidden_layer(z);
                let active: Vec<usize> = (0..hid).filter(|j| pre[*j] > 0.0).collect();
                let mut recon = vec![0.0; h];
                for &j in &active {
                    axpy(act[j], &w2t[j * h..(j + 1) * h], &mut recon);
                }
                recon.iter_mut().zip(&eta.b2).for_each(|(r, b)| *r += b);
                let mf = model.forward(&recon);
                let mut d = softmax(&mf.logits);
                loss -= crate::model::safe_ln(d[targets[i]]);
                d[targets[i]] -= 1.0;
                model.backward(&recon, &mf, &d, None, Some(&mut dy));
                g[3].iter_mut().zip(&dy).for_each(|(gb, v)| *gb += v);
                for &j in &active {
                    axpy(act[j], &dy, &mut g[2][j * h..(j + 1) * h]);
                    let dj = dot(&w2t[j * h..(j + 1) * h], &dy);
                    g[1][j] += dj;
                    if s > 0 {
                        axpy(dj, z, &mut g[0][j * s..(j + 1) * s]);
                    }
                }
            }
            let sc = 1.0 / batch.len() as f64;
            g.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= sc));
            opt[0].step(&mut eta.w1, &g[0]);
            opt[1].step(&mut eta.b1, &g[1]);
            opt[2].step(&mut w2t, &g[2]);
            opt[3].step(&mut eta.b2, &g[3]);
        }
        check_finite_loss(loss / n as f64, epoch)?;
        history.push(loss / n as f64);
    }
    eta.w2 = transpose(&w2t, hid, h);
    let agreement = scores
        .iter()
        .zip(&targets)
        .filter(|(z, t)| argmax(&model.forward(&eta.reconstruct(z)).logits) == **t)
        .count() as f64
        / n as f64;
    Ok((eta, loss_report(history, agreement)))
}

/// Accuracy recovered through the subset relative to the model, both net of
/// the chance rate `1/K`, against gold labels.
pub fn completeness(eta: &EtaHead, model: &ClassifierHead, features: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    if features.rows() == 0 || labels.len() != features.rows() {
        return Err(Error::contract("completeness needs aligned, nonempty data"));
    }
    let chance = 1.0 / model.classes() as f64;
    let n = labels.len() as f64;
    let mut eta_hits = 0usize;
    let mut model_hits = 0usize;
    for (x, y) in features.iter().zip(labels) {
        eta_hits += (argmax(&eta.predict(x)?) == *y) as usize;
        model_hits += (argmax(&model.forward(x).logits) == *y) as usize;
    }
    let denom = model_hits as f64 / n - chance;
    if denom <= 0.0 {
        return Err(Error::Undefined("model accuracy does not exceed chance".into()));
    }
    Ok((eta_hits as f64 / n - chance) / denom)
}

/// Shapley attribution of the change in `eta` output to one concept,
/// over the four aspects. Ignores `(c, c')`.
#[derive(Clone, Debug)]
pub struct ConceptShapExplainer {
    etas: Vec<EtaHead>,
}

impl ConceptShapExplainer {
    /// `etas` must hold one head per subset, in bitmask order.
    pub fn new(etas: Vec<EtaHead>) -> Result<Self> {
        if etas.len() != 16 || etas.iter().enumerate().any(|(i, e)| e.subset.0 as usize != i) {
            return Err(Error::contract("ConceptSHAP needs all 16 subset heads in order"));
        }
        Ok(ConceptShapExplainer { etas })
    }

    pub fn fit(
        model: &ClassifierHead,
        cavs: &[ConceptDirection],
        features: &FeatureMatrix,
        config: &EtaConfig,
    ) -> Result<(Self, Vec<TrainReport>)> {
        let mut etas = Vec::with_capacity(16);
        let mut reports = Vec::with_capacity(16);
        for s in Subset::all() {
            let (eta, report) = fit_eta(s, cavs, features, model, config)?;
            etas.push(eta);
            reports.push(report);
        }
        Ok((Self::new(etas)?, reports))
    }

    pub fn eta(&self, subset: Subset) -> &EtaHead {
        &self.etas[subset.0 as usize]
    }

    pub fn estimate(&self, x: &[f64], concept: AspectName) -> Result<EffectVector> {
        let outputs: Vec<Vec<f64>> = self.etas.iter().map(|e| e.predict(x)).collect::<Result<_>>()?;
        let k = outputs[0].len();
        let mut total = vec![0.0; k];
        for s in Subset::all().filter(|s| !s.contains(concept)) {
            let w = shapley_weight(4, s.len());
            let with = &outputs[s.with(concept).0 as usize];
            let without = &outputs[s.0 as usize];
            for ((t, a), b) in total.iter_mut().zip(with).zip(without) {
                *t += w * (a - b);
            }
        }
        Ok(EffectVector::new(total))
    }
}

impl Explainer for ConceptShapExplainer {
    fn name(&self) -> &str {
        "conceptshap"
    }

    fn explain(&self, q: &Query<'_>) -> Result<Estimate> {
        Ok(Estimate::effect(self.estimate(q.base_features, q.concept)?))
    }
}
