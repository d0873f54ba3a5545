//! Synthetic generative process with a latent confounder, concept
//! mediators and a fixed classifier, for which every causal quantity has an
//! exact or Monte-Carlo oracle.
//!
//! A unit draws a latent `u` in {-1, +1}; each concept then draws a value
//! with `P(c | u) ∝ prior_c · exp(rho · u · s_c)`, `s = (-1, 0, +1)` over
//! (Negative, Unknown, Positive). Features are `Σ_j W_j[c_j] + sigma · ε` with
//! one noise draw per unit, shared by all its interventions. The explained
//! model is a fixed head over those features; ratings come from the same
//! head on the noiseless emission.

mod check;

pub use check::{run_synthcheck, CheckItem, SynthCheckConfig, SynthCheckReport};

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_edit_pairs, AspectName, AspectVotes, ConceptValue, Corpus, EditGoal, EditPair, Majority, RatingVotes,
    Review, Split, SplitFilter, TaskGranularity,
};
use crate::explainers::EffectVector;
use crate::features::FeatureMatrix;
use crate::linalg::softmax;
use crate::model::{Architecture, ClassifierHead};
use crate::rng::{substream, Rng};
use crate::{Error, Result};

const SCORES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// Between 1 and 4; concept `j` is reported as the `j`-th aspect.
    pub concepts: usize,
    pub dim: usize,
    pub granularity: TaskGranularity,
    /// Confounding strength of the latent on all concept priors.
    pub rho: f64,
    pub sigma: f64,
    /// Unconfounded prior over (Negative, Unknown, Positive).
    pub prior: [f64; 3],
    pub emission_scale: f64,
    pub head_scale: f64,
    /// Seed for the emission map and head.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            concepts: 4,
            dim: 16,
            granularity: TaskGranularity::Ternary,
            rho: 1.5,
            sigma: 0.0,
            prior: [0.3, 0.3, 0.4],
            emission_scale: 1.0,
            head_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticProcess {
    pub spec: SyntheticSpec,
    /// `emission[j][v]` is the feature contribution of concept `j` at value `v`.
    pub emission: Vec<[Vec<f64>; 3]>,
    pub head: ClassifierHead,
}

/// Concept assignment of a unit, one value index per concept.
pub type Assignment = Vec<usize>;

impl SyntheticProcess {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        if !(1..=4).contains(&spec.concepts) {
            return Err(Error::Config("synthetic processes have 1 to 4 concepts".into()));
        }
        if spec.dim == 0 || spec.prior.iter().any(|p| *p <= 0.0) || spec.sigma < 0.0 {
            return Err(Error::Config("synthetic spec needs dim > 0, positive priors, sigma >= 0".into()));
        }
        let mut rng = substream(spec.seed, "synthgen/process");
        let normal = |rng: &mut Rng, scale: f64, n: usize| -> Vec<f64> {
            (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let emission = (0..spec.concepts)
            .map(|_| [0, 1, 2].map(|_| normal(&mut rng, spec.emission_scale, spec.dim)))
            .collect();
        let k = spec.granularity.classes();
        let mut params = normal(&mut rng, spec.head_scale, k * spec.dim);
        params.extend(std::iter::repeat_n(0.0, k));
        let head = ClassifierHead::from_params(Architecture::Linear, spec.dim, k, params)?;
        Ok(SyntheticProcess { spec, emission, head })
    }

    /// Replaces the explained head; it must read `dim` features.
    pub fn with_head(mut self, head: ClassifierHead) -> Result<Self> {
        if head.input_dim() != self.spec.dim {
            return Err(Error::contract("synthetic head input dim differs from emission dim"));
        }
        self.head = head;
        Ok(self)
    }

    pub fn with_emission(mut self, concept: usize, rows: [Vec<f64>; 3]) -> Result<Self> {
        if concept >= self.spec.concepts || rows.iter().any(|r| r.len() != self.spec.dim) {
            return Err(Error::contract("emission override has the wrong shape"));
        }
        self.emission[concept] = rows;
        Ok(self)
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn aspect(j: usize) -> AspectName {
        AspectName::ALL[j]
    }

    /// `P(c | u)` over value indices.
    pub fn conditional_prior(&self, u: f64) -> [f64; 3] {
        let w = [0, 1, 2].map(|v| self.spec.prior[v] * (self.spec.rho * u * SCORES[v]).exp());
        let z: f64 = w.iter().sum();
        w.map(|x| x / z)
    }

    /// Marginal `P(c)` after averaging over the latent.
    pub fn marginal_prior(&self) -> [f64; 3] {
        let (a, b) = (self.conditional_prior(-1.0), self.conditional_prior(1.0));
        [0, 1, 2].map(|v| 0.5 * (a[v] + b[v]))
    }

    pub fn emit(&self, assignment: &[usize], noise: Option<&[f64]>) -> Vec<f64> {
        let mut x = noise.map_or_else(|| vec![0.0; self.spec.dim], |n| n.to_vec());
        for (j, v) in assignment.iter().enumerate() {
            x.iter_mut().zip(&self.emission[j][*v]).for_each(|(a, b)| *a += b);
        }
        x
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.head.forward(x).logits)
    }

    /// All assignments with their probabilities, by enumeration over the
    /// latent and the concept values.
    pub fn assignment_distribution(&self) -> Vec<(Assignment, f64)> {
        let m = self.spec.concepts;
        let mut out: BTreeMap<Assignment, f64> = BTreeMap::new();
        for u in [-1.0, 1.0] {
            let p = self.conditional_prior(u);
            for code in 0..3usize.pow(m as u32) {
                let a: Assignment = (0..m).map(|j| (code / 3usize.pow(j as u32)) % 3).collect();
                let w = 0.5 * a.iter().map(|v| p[*v]).product::<f64>();
                *out.entry(a).or_insert(0.0) += w;
            }
        }
        out.into_iter().collect()
    }
}

/// Generated corpus with aligned features, model outputs and the true
/// effect of every edit pair.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub features: FeatureMatrix,
    pub outputs: Vec<Vec<f64>>,
    pub assignments: Vec<Assignment>,
    pub latents: Vec<f64>,
    pub pairs: Vec<SyntheticPair>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub pair: EditPair,
    pub true_icace: EffectVector,
}

impl SyntheticData {
    /// Aspect labels of a review as stored in the corpus.
    pub fn labels(&self, i: usize) -> [Option<ConceptValue>; 4] {
        let r = &self.corpus.reviews()[i];
        AspectName::ALL.map(|a| r.aspect_value(a))
    }

    pub fn original_indices(&self, split: SplitFilter) -> Vec<usize> {
        self.corpus
            .reviews()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_original && split.contains(r.split))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Star rating standing for a class in the canonical corpus.
pub fn stars_for_class(granularity: TaskGranularity, class: usize) -> u8 {
    match granularity {
        TaskGranularity::Binary => [1, 5][class],
        TaskGranularity::Ternary => [1, 3, 5][class],
        TaskGranularity::FiveWay => class as u8 + 1,
    }
}

fn render_text(assignment: &[usize]) -> String {
    assignment
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let value = ConceptValue::ALL[*v];
            format!("{}{}", SyntheticProcess::aspect(j).as_str(), value.short().to_lowercase())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Draws `n` units from stream `seed`. Each unit becomes an original
/// review plus one edited review per (concept, other value). Units are
/// assigned to the test split with probability `test_fraction`, otherwise
/// the original goes to train-exclusive and its edits to train-inclusive.
pub fn generate(process: &SyntheticProcess, n: usize, test_fraction: f64, seed: u64) -> Result<SyntheticData> {
    let spec = &process.spec;
    let mut rng = substream(seed, "synthgen/sample");
    let mut reviews = Vec::new();
    let mut features = FeatureMatrix::new(spec.dim);
    let mut outputs = Vec::new();
    let mut assignments = Vec::new();
    let mut latents = Vec::new();
    for unit in 0..n {
        let u = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let p = process.conditional_prior(u);
        let base: Assignment = (0..spec.concepts)
            .map(|_| {
                let r: f64 = rng.random();
                if r < p[0] {
                    0
                } else if r < p[0] + p[1] {
                    1
                } else {
                    2
                }
            })
            .collect();
        let noise: Vec<f64> = (0..spec.dim)
            .map(|_| spec.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let test = rng.random::<f64>() < test_fraction;
        let original_id = format!("syn{seed}_{unit:06}");
        let mut variants = vec![(base.clone(), None)];
        for j in 0..spec.concepts {
            for v in 0..3 {
                if v != base[j] {
                    let mut a = base.clone();
                    a[j] = v;
                    variants.push((a, Some(EditGoal {
                        aspect: SyntheticProcess::aspect(j),
                        target: ConceptValue::ALL[v],
                    })));
                }
            }
        }
        for (k, (a, goal)) in variants.into_iter().enumerate() {
            let x = process.emit(&a, (spec.sigma > 0.0).then_some(noise.as_slice()));
            let clean = process.emit(&a, None);
            let class = crate::linalg::argmax(&process.head.forward(&clean).logits);
            let stars = stars_for_class(spec.granularity, class);
            let votes = RatingVotes::new([stars; 5])?;
            let mut aspect_votes = BTreeMap::new();
            let mut aspect_majority = BTreeMap::new();
            for (j, v) in a.iter().enumerate() {
                let value = ConceptValue::ALL[*v];
                aspect_votes.insert(SyntheticProcess::aspect(j), AspectVotes([value; 5]));
                aspect_majority.insert(SyntheticProcess::aspect(j), Majority::Value(value));
            }
            let is_original = k == 0;
            reviews.push(Review {
                id: format!("{original_id}_{k:02}"),
                original_id: original_id.clone(),
                is_original,
                text: render_text(&a),
                edit_goal: goal,
                aspect_votes,
                aspect_majority,
                rating_majority: Some(votes.majority()),
                rating_votes: Some(votes),
                split: match (test, is_original) {
                    (true, _) => Split::Test,
                    (false, true) => Split::TrainExclusive,
                    (false, false) => Split::TrainInclusive,
                },
                metadata: Default::default(),
            });
            outputs.push(process.output(&x));
            features.push(&x)?;
            assignments.push(a);
            latents.push(u);
        }
    }
    let corpus = Corpus::new(reviews)?;
    let pairs = build_edit_pairs(&corpus, SplitFilter::All)
        .into_iter()
        .map(|pair| SyntheticPair {
            true_icace: EffectVector::difference(&outputs[pair.edit], &outputs[pair.base]),
            pair,
        })
        .collect();
    Ok(SyntheticData {
        corpus,
        features,
        outputs,
        assignments,
        latents,
        pairs,
    })
}

/// Population value with its Monte-Carlo standard error (zero when exact).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Population quantities of one (concept, from, to) direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    pub concept: AspectName,
    pub from: ConceptValue,
    pub to: ConceptValue,
    pub cace: OracleValue,
    /// Mean change of the class value of the rating.
    pub ate: f64,
    /// Observational contrast of mean outputs.
    pub conexp: OracleValue,
}

/// Exact (sigma = 0) or Monte-Carlo causal quantities of a process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEffects {
    pub exact: bool,
    pub cells: Vec<OracleCell>,
    /// Mean over unordered value pairs of ‖CaCE‖, per concept.
    pub acace: Vec<f64>,
}

impl OracleEffects {
    pub fn cell(&self, concept: AspectName, from: ConceptValue, to: ConceptValue) -> Option<&OracleCell> {
        self.cells.iter().find(|c| c.concept == concept && c.from == from && c.to == to)
    }

    pub fn cace_of(&self, concept: AspectName, from: ConceptValue, to: ConceptValue) -> Option<&OracleValue> {
        self.cell(concept, from, to).map(|c| &c.cace)
    }
}

fn directions() -> Vec<(usize, usize)> {
    let mut d = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                d.push((a, b));
            }
        }
    }
    d
}

/// Oracle effects: enumeration when `sigma = 0`, otherwise `mc_samples`
/// Monte-Carlo units drawn from stream `seed`.
pub fn oracle_effects(process: &SyntheticProcess, mc_samples: usize, seed: u64) -> OracleEffects {
    let m = process.spec.concepts;
    let k = process.classes();
    let g = process.spec.granularity;
    let rating = |a: &[usize]| {
        let c = crate::linalg::argmax(&process.head.forward(&process.emit(a, None)).logits);
        g.class_value(c)
    };
    // Samples: (assignment, noise, weight).
    let samples: Vec<(Assignment, Option<Vec<f64>>, f64)> = if process.spec.sigma == 0.0 {
        process
            .assignment_distribution()
            .into_iter()
            .map(|(a, w)| (a, None, w))
            .collect()
    } else {
        let mut rng = substream(seed, "synthgen/oracle");
        let w = 1.0 / mc_samples.max(1) as f64;
        (0..mc_samples)
            .map(|_| {
                let u = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let p = process.conditional_prior(u);
                let a: Assignment = (0..m)
                    .map(|_| {
                        let r: f64 = rng.random();
                        if r < p[0] {
                            0
                        } else if r < p[0] + p[1] {
                            1
                        } else {
                            2
                        }
                    })
                    .collect();
                let noise: Vec<f64> = (0..process.spec.dim)
                    .map(|_| process.spec.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (a, Some(noise), w)
            })
            .collect()
    };
    let exact = process.spec.sigma == 0.0;

    let weighted = |values: &[(Vec<f64>, f64)]| -> OracleValue {
        let total_w: f64 = values.iter().map(|(_, w)| w).sum();
        let mut mean = vec![0.0; k];
        for (v, w) in values {
            mean.iter_mut().zip(v).for_each(|(a, b)| *a += w * b / total_w);
        }
        let std_err = if exact {
            vec![0.0; k]
        } else {
            let n = values.len() as f64;
            (0..k)
                .map(|c| {
                    let var = values.iter().map(|(v, _)| (v[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                    (var / n).sqrt()
                })
                .collect()
        };
        OracleValue { mean, std_err }
    };

    let mut cells = Vec::new();
    for j in 0..m {
        for (from, to) in directions() {
            let mut diffs = Vec::with_capacity(samples.len());
            let mut ate_num = 0.0;
            let mut ate_den = 0.0;
            for (a, noise, w) in &samples {
                let mut a_from = a.clone();
                a_from[j] = from;
                let mut a_to = a.clone();
                a_to[j] = to;
                let y_from = process.output(&process.emit(&a_from, noise.as_deref()));
                let y_to = process.output(&process.emit(&a_to, noise.as_deref()));
                diffs.push((y_to.iter().zip(&y_from).map(|(x, y)| x - y).collect(), *w));
                ate_num += w * (rating(&a_to) - rating(&a_from));
                ate_den += w;
            }
            let cace = weighted(&diffs);

            let cond = |v: usize| -> Vec<(Vec<f64>, f64)> {
                samples
                    .iter()
                    .filter(|(a, _, _)| a[j] == v)
                    .map(|(a, noise, w)| (process.output(&process.emit(a, noise.as_deref())), *w))
                    .collect()
            };
            let (hi, lo) = (weighted(&cond(to)), weighted(&cond(from)));
            cells.push(OracleCell {
                concept: SyntheticProcess::aspect(j),
                from: ConceptValue::ALL[from],
                to: ConceptValue::ALL[to],
                cace,
                ate: ate_num / ate_den,
                conexp: OracleValue {
                    mean: hi.mean.iter().zip(&lo.mean).map(|(a, b)| a - b).collect(),
                    std_err: hi.std_err.iter().zip(&lo.std_err).map(|(a, b)| (a * a + b * b).sqrt()).collect(),
                },
            });
        }
    }
    let mut effects = OracleEffects {
        exact,
        cells,
        acace: Vec::new(),
    };
    effects.acace = (0..m)
        .map(|j| {
            crate::corpus::unordered_value_pairs()
                .iter()
                .map(|(a, b)| {
                    let c = effects.cace_of(SyntheticProcess::aspect(j), *a, *b).expect("all directions");
                    crate::linalg::norm(&c.mean)
                })
                .sum::<f64>()
                / 3.0
        })
        .collect();
    effects
}
