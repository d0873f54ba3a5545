//! Estimator-versus-oracle checks on a synthetic process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, oracle_effects, OracleEffects, SyntheticData, SyntheticProcess, SyntheticSpec};
use crate::corpus::{AspectName, ConceptValue, SplitFilter};
use crate::explainers::{
    ConexpExplainer, EffectVector, Estimate, Explainer, OracleExplainer, Query, RandomExplainer, SLearnerExplainer,
};
use crate::features::FeatureMatrix;
use crate::metrics::{compute_cace, compute_icace, distance, icace_error, mean_effect, DistanceMetric};
use crate::model::TrainConfig;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCheckConfig {
    pub spec: SyntheticSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub slearner: TrainConfig,
    /// Tolerance on empirical CaCE, in standard errors.
    pub mc_bound: f64,
    /// Monte-Carlo units for the oracle when sigma > 0.
    pub mc_samples: usize,
    /// Smallest mean L2 gap between the population CONEXP contrast and the
    /// CaCE that counts as a proven bias.
    pub min_conexp_gap: f64,
}

impl Default for SynthCheckConfig {
    fn default() -> Self {
        SynthCheckConfig {
            spec: SyntheticSpec::default(),
            n_train: 10_000,
            n_test: 1000,
            seeds: (0..5).collect(),
            slearner: TrainConfig::default(),
            mc_bound: 4.0,
            mc_samples: 200_000,
            min_conexp_gap: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCheckReport {
    pub items: Vec<CheckItem>,
    pub oracle: OracleEffects,
}

impl SynthCheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            let seed = i.seed.map_or_else(|| "-".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{:<4} {:<24} seed={:<3} {}\n",
                if i.passed { "PASS" } else { "FAIL" },
                i.name,
                seed,
                i.detail
            ));
        }
        let failed = self.items.iter().filter(|i| !i.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.items.len(), failed));
        out
    }
}

fn cells(m: usize) -> Vec<(AspectName, ConceptValue, ConceptValue)> {
    let mut out = Vec::new();
    for j in 0..m {
        for from in ConceptValue::ALL {
            for to in ConceptValue::ALL {
                if from != to {
                    out.push((SyntheticProcess::aspect(j), from, to));
                }
            }
        }
    }
    out
}

/// Estimates of an explainer for every test pair, grouped per cell in the
/// order of [`cells`], with the true ICaCEs alongside.
struct CellEstimates {
    truth: Vec<Vec<EffectVector>>,
    estimates: Vec<Vec<EffectVector>>,
}

fn estimate_cells(data: &SyntheticData, explainer: &dyn Explainer, m: usize) -> Result<CellEstimates> {
    let all = cells(m);
    let mut truth = vec![Vec::new(); all.len()];
    let mut estimates = vec![Vec::new(); all.len()];
    let reviews = data.corpus.reviews();
    for (n, sp) in data.pairs.iter().enumerate() {
        let p = &sp.pair;
        if !SplitFilter::Test.contains(reviews[p.base].split) {
            continue;
        }
        let Some(c) = all.iter().position(|c| *c == (p.concept, p.from_value, p.to_value)) else {
            continue;
        };
        let key = p.key(&data.corpus);
        let labels = data.labels(p.base);
        let q = Query {
            index: n as u64,
            key: &key,
            base_group: &reviews[p.base].original_id,
            base_features: data.features.row(p.base),
            base_output: &data.outputs[p.base],
            edit_output: Some(&data.outputs[p.edit]),
            base_labels: Some(labels.map(|l| l.expect("synthetic labels are complete"))),
            concept: p.concept,
            from: p.from_value,
            to: p.to_value,
        };
        if let Estimate::Effect { effect, .. } = explainer.explain(&q)? {
            truth[c].push(sp.true_icace.clone());
            estimates[c].push(effect);
        }
    }
    Ok(CellEstimates { truth, estimates })
}

fn mean_cace_error(ce: &CellEstimates, metric: DistanceMetric) -> f64 {
    let errs: Vec<f64> = ce
        .truth
        .iter()
        .zip(&ce.estimates)
        .filter_map(|(t, e)| {
            let cace = compute_cace(t)?;
            let est = mean_effect(e)?;
            Some(distance(metric, &cace.values, &est.values))
        })
        .collect();
    errs.iter().sum::<f64>() / errs.len().max(1) as f64
}

fn check_seed(
    process: &SyntheticProcess,
    oracle: &OracleEffects,
    config: &SynthCheckConfig,
    seed: u64,
) -> Result<Vec<CheckItem>> {
    let m = process.spec.concepts;
    let total = config.n_train + config.n_test;
    let test_fraction = config.n_test as f64 / total.max(1) as f64;
    let data = generate(process, total, test_fraction, seed)?;
    let mut items = Vec::new();
    let mut item = |name: &str, passed: bool, detail: String| {
        items.push(CheckItem {
            name: name.to_string(),
            seed: Some(seed),
            passed,
            detail,
        })
    };

    let mut bitwise = true;
    for sp in &data.pairs {
        let e = compute_icace(&process.head, data.features.row(sp.pair.base), data.features.row(sp.pair.edit))?;
        bitwise &= e.values.iter().zip(&sp.true_icace.values).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    item("icace_bitwise", bitwise, format!("{} pairs", data.pairs.len()));

    let oracle_cells = estimate_cells(&data, &OracleExplainer, m)?;
    let worst = DistanceMetric::ALL
        .iter()
        .flat_map(|metric| {
            oracle_cells
                .truth
                .iter()
                .zip(&oracle_cells.estimates)
                .filter_map(move |(t, e)| icace_error(*metric, t, e))
        })
        .fold(0.0, f64::max);
    item("oracle_zero_error", worst == 0.0, format!("max ICaCE-Error {worst:e}"));

    let random = RandomExplainer::new(seed, process.classes())?;
    let rc = estimate_cells(&data, &random, m)?;
    let flat = |v: &Vec<Vec<EffectVector>>| v.iter().flatten().cloned().collect::<Vec<_>>();
    let rand_cos = icace_error(DistanceMetric::Cosine, &flat(&rc.truth), &flat(&rc.estimates)).unwrap_or(f64::NAN);
    item(
        "random_cosine_anchor",
        (0.95..=1.05).contains(&rand_cos),
        format!("cosine ICaCE-Error {rand_cos:.4}"),
    );

    // Empirical CaCE on test pairs against the population value.
    let mut worst_z: f64 = 0.0;
    for (c, (aspect, from, to)) in cells(m).into_iter().enumerate() {
        let t = &oracle_cells.truth[c];
        let Some(emp) = compute_cace(t) else { continue };
        let o = oracle.cace_of(aspect, from, to).expect("oracle covers every cell");
        let n = t.len() as f64;
        for k in 0..emp.len() {
            let var = t.iter().map(|e| (e.values[k] - emp.values[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n + o.std_err[k].powi(2)).sqrt();
            let gap = (emp.values[k] - o.mean[k]).abs();
            let z = if se > 0.0 { gap / se } else if gap <= 1e-12 { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z);
        }
    }
    item(
        "cace_within_mc_bounds",
        worst_z <= config.mc_bound,
        format!("max |empirical - oracle| = {worst_z:.2} SE (bound {})", config.mc_bound),
    );

    // Fit the label-based estimators on the train originals.
    let train = data.original_indices(SplitFilter::TrainExclusive);
    let labels: Vec<[Option<ConceptValue>; 4]> = train.iter().map(|&i| data.labels(i)).collect();
    let outputs: Vec<Vec<f64>> = train.iter().map(|&i| data.outputs[i].clone()).collect();
    let conexp = ConexpExplainer::fit(&outputs, &labels)?;
    let targets = FeatureMatrix::from_rows(process.classes(), outputs)?;
    let (slearner, _) = SLearnerExplainer::fit(&labels, &targets, &config.slearner.clone().with_seed(seed))?;
    let conexp_err = mean_cace_error(&estimate_cells(&data, &conexp, m)?, DistanceMetric::L2);
    let slearner_err = mean_cace_error(&estimate_cells(&data, &slearner, m)?, DistanceMetric::L2);
    item(
        "slearner_beats_conexp",
        slearner_err < conexp_err,
        format!("mean L2 CaCE-Error: s-learner {slearner_err:.4}, conexp {conexp_err:.4}"),
    );
    Ok(items)
}

pub fn run_synthcheck(config: &SynthCheckConfig) -> Result<SynthCheckReport> {
    let process = SyntheticProcess::new(config.spec.clone())?;
    let oracle = oracle_effects(&process, config.mc_samples, config.spec.seed);
    let m = process.spec.concepts;
    let gap: f64 = cells(m)
        .iter()
        .map(|(a, f, t)| {
            let c = oracle.cell(*a, *f, *t).expect("oracle covers every cell");
            distance(DistanceMetric::L2, &c.conexp.mean, &c.cace.mean)
        })
        .sum::<f64>()
        / cells(m).len() as f64;
    let mut items = vec![CheckItem {
        name: "conexp_bias_proven".into(),
        seed: None,
        passed: oracle.exact && gap >= config.min_conexp_gap,
        detail: format!(
            "population mean L2 gap CONEXP vs CaCE {gap:.4} ({})",
            if oracle.exact { "enumeration" } else { "Monte-Carlo" }
        ),
    }];
    let per_seed: Vec<Result<Vec<CheckItem>>> = config
        .seeds
        .par_iter()
        .map(|&s| check_seed(&process, &oracle, config, s))
        .collect();
    for r in per_seed {
        items.extend(r?);
    }
    Ok(SynthCheckReport { items, oracle })
}
