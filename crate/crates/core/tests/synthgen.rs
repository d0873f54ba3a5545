use cebab_core::corpus::{AspectName, ConceptValue, SplitFilter};
use cebab_core::explainers::*;
use cebab_core::features::FeatureMatrix;
use cebab_core::metrics::{compute_cace, icace_error, DistanceMetric};
use cebab_core::model::TrainConfig;
use cebab_core::synthgen::*;

use ConceptValue::{Negative as Neg, Positive as Pos, Unknown as Unk};

fn spec(concepts: usize, rho: f64, sigma: f64) -> SyntheticSpec {
    SyntheticSpec {
        concepts,
        rho,
        sigma,
        seed: 3,
        ..SyntheticSpec::default()
    }
}

fn hand_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Output of the process head computed from its raw weights; the bias is zero.
fn hand_output(p: &SyntheticProcess, x: &[f64]) -> Vec<f64> {
    let w = p.head.linear_weights().unwrap();
    let d = x.len();
    let logits: Vec<f64> = (0..p.classes())
        .map(|k| (0..d).map(|i| w[k * d + i] * x[i]).sum())
        .collect();
    hand_softmax(&logits)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[test]
fn unconfounded_two_concept_cace_has_closed_form() {
    let p = SyntheticProcess::new(spec(2, 0.0, 0.0)).unwrap();
    let oracle = oracle_effects(&p, 0, 0);
    assert!(oracle.exact);
    let z: f64 = p.spec.prior.iter().sum();
    for (from, to) in [(Neg, Pos), (Unk, Neg), (Pos, Unk)] {
        let (a, b) = (from.index(), to.index());
        let mut expected = vec![0.0; p.classes()];
        for v in 0..3 {
            let hi = hand_output(&p, &add(&p.emission[0][b], &p.emission[1][v]));
            let lo = hand_output(&p, &add(&p.emission[0][a], &p.emission[1][v]));
            for k in 0..expected.len() {
                expected[k] += p.spec.prior[v] / z * (hi[k] - lo[k]);
            }
        }
        let got = &oracle.cace_of(AspectName::Food, from, to).unwrap().mean;
        assert!(got.iter().zip(&expected).all(|(g, e)| (g - e).abs() < 1e-12), "{got:?} {expected:?}");
        // Without confounding the observational contrast is causal.
        let conexp = &oracle.cell(AspectName::Food, from, to).unwrap().conexp.mean;
        assert!(conexp.iter().zip(&expected).all(|(g, e)| (g - e).abs() < 1e-12));
    }
}

#[test]
fn confounding_biases_the_observational_contrast() {
    let p = SyntheticProcess::new(spec(4, 1.5, 0.0)).unwrap();
    let oracle = oracle_effects(&p, 0, 0);
    let gap = oracle
        .cells
        .iter()
        .map(|c| c.cace.mean.iter().zip(&c.conexp.mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    assert!(gap > 0.01, "{gap}");
}

#[test]
fn oracle_cace_is_antisymmetric() {
    for sigma in [0.0, 0.5] {
        let p = SyntheticProcess::new(spec(3, 1.0, sigma)).unwrap();
        let oracle = oracle_effects(&p, 2000, 1);
        for c in &oracle.cells {
            let back = oracle.cace_of(c.concept, c.to, c.from).unwrap();
            assert!(c.cace.mean.iter().zip(&back.mean).all(|(a, b)| (a + b).abs() < 1e-15));
            assert!((c.ate + oracle.cell(c.concept, c.to, c.from).unwrap().ate).abs() < 1e-12);
        }
        assert_eq!(oracle.cells.len(), 3 * 6);
    }
}

#[test]
fn identity_intervention_has_no_effect() {
    let p = SyntheticProcess::new(spec(2, 1.0, 0.3)).unwrap();
    let data = generate(&p, 50, 0.5, 0).unwrap();
    for (i, a) in data.assignments.iter().enumerate() {
        let x = data.features.row(i);
        let y = p.output(x);
        assert_eq!(EffectVector::difference(&y, &data.outputs[i]).values, vec![0.0; p.classes()]);
        assert_eq!(p.emit(a, None), p.emit(a, None));
    }
    // Every edit pair changes exactly one concept.
    for sp in &data.pairs {
        let (a, b) = (&data.assignments[sp.pair.base], &data.assignments[sp.pair.edit]);
        assert_eq!(a.iter().zip(b).filter(|(x, y)| x != y).count(), 1);
    }
}

#[test]
fn sampled_concept_frequencies_match_the_marginal() {
    let n = 10_000;
    let p = SyntheticProcess::new(spec(4, 1.5, 0.0)).unwrap();
    let data = generate(&p, n, 0.1, 7).unwrap();
    let originals = data.original_indices(SplitFilter::All);
    assert_eq!(originals.len(), n);
    let marginal = p.marginal_prior();
    for j in 0..4 {
        for v in 0..3 {
            let freq = originals.iter().filter(|&&i| data.assignments[i][j] == v).count() as f64 / n as f64;
            let se = (marginal[v] * (1.0 - marginal[v]) / n as f64).sqrt();
            assert!((freq - marginal[v]).abs() < 3.0 * se, "concept {j} value {v}: {freq} vs {}", marginal[v]);
        }
    }
}

#[test]
fn null_emission_gives_exactly_zero_effects() {
    let p = SyntheticProcess::new(spec(2, 1.0, 0.4)).unwrap();
    let row = p.emission[0][1].clone();
    let p = p.with_emission(0, [row.clone(), row.clone(), row]).unwrap();
    let oracle = oracle_effects(&p, 500, 2);
    for (from, to) in cebab_core::corpus::ordered_directions() {
        assert!(oracle.cace_of(AspectName::Food, from, to).unwrap().mean.iter().all(|v| *v == 0.0));
    }
    assert_eq!(oracle.acace[0], 0.0);
    assert!(oracle.acace[1] > 0.0);
    let data = generate(&p, 40, 0.5, 0).unwrap();
    let food: Vec<_> = data.pairs.iter().filter(|sp| sp.pair.concept == AspectName::Food).collect();
    assert!(!food.is_empty());
    assert!(food.iter().all(|sp| sp.true_icace.values.iter().all(|v| *v == 0.0)));
}

#[test]
fn enumeration_agrees_with_sampled_pairs() {
    let p = SyntheticProcess::new(spec(2, 1.5, 0.0)).unwrap();
    let oracle = oracle_effects(&p, 0, 0);
    let data = generate(&p, 10_000, 0.0, 11).unwrap();
    for cell in &oracle.cells {
        let t: Vec<EffectVector> = data
            .pairs
            .iter()
            .filter(|sp| (sp.pair.concept, sp.pair.from_value, sp.pair.to_value) == (cell.concept, cell.from, cell.to))
            .map(|sp| sp.true_icace.clone())
            .collect();
        // One pair per unit and direction.
        assert_eq!(t.len(), 10_000);
        let emp = compute_cace(&t).unwrap();
        let n = t.len() as f64;
        for k in 0..emp.len() {
            let var = t.iter().map(|e| (e.values[k] - emp.values[k]).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            assert!((emp.values[k] - cell.cace.mean[k]).abs() <= 3.0 * se + 1e-12);
        }
    }
}

#[test]
fn monte_carlo_oracle_agrees_with_sampled_pairs() {
    let p = SyntheticProcess::new(spec(1, 1.0, 0.5)).unwrap();
    let oracle = oracle_effects(&p, 20_000, 5);
    assert!(!oracle.exact);
    let data = generate(&p, 10_000, 0.0, 12).unwrap();
    for cell in &oracle.cells {
        let t: Vec<EffectVector> = data
            .pairs
            .iter()
            .filter(|sp| (sp.pair.from_value, sp.pair.to_value) == (cell.from, cell.to))
            .map(|sp| sp.true_icace.clone())
            .collect();
        let emp = compute_cace(&t).unwrap();
        let n = t.len() as f64;
        for k in 0..emp.len() {
            let var = t.iter().map(|e| (e.values[k] - emp.values[k]).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n + cell.cace.std_err[k].powi(2)).sqrt();
            assert!((emp.values[k] - cell.cace.mean[k]).abs() <= 3.0 * se);
        }
    }
}

#[test]
fn slearner_recovers_a_label_linear_model() {
    // Output is a softmax of additive per-label logits, which the S-Learner
    // can represent exactly.
    let food = [[1.0, -0.5, 0.0], [0.0, 0.2, 0.0], [-1.2, 0.8, 0.0]];
    let service = [[0.3, 0.0, 0.0], [0.0, 0.0, 0.0], [-0.4, 0.6, 0.0]];
    let truth = |f: usize, s: usize| hand_softmax(&add(&food[f], &service[s]));
    let mut labels = Vec::new();
    let mut outputs = Vec::new();
    for rep in 0..20 {
        for f in 0..3 {
            for s in 0..3 {
                let amb = ConceptValue::ALL[rep % 3];
                labels.push([Some(ConceptValue::ALL[f]), Some(ConceptValue::ALL[s]), Some(amb), None]);
                outputs.push(truth(f, s));
            }
        }
    }
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 1500,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (sl, _) = SLearnerExplainer::fit(&labels, &FeatureMatrix::from_rows(3, outputs).unwrap(), &cfg).unwrap();
    for s in 0..3 {
        for (from, to) in cebab_core::corpus::ordered_directions() {
            let q = Query {
                index: 0,
                key: "k",
                base_group: "g",
                base_features: &[],
                base_output: &[],
                edit_output: None,
                base_labels: Some([from, ConceptValue::ALL[s], Pos, Unk]),
                concept: AspectName::Food,
                from,
                to,
            };
            let got = sl.explain(&q).unwrap().as_effect().cloned().unwrap();
            let want = EffectVector::difference(&truth(to.index(), s), &truth(from.index(), s));
            let err = got.values.iter().zip(&want.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 0.01, "service {s} {from}->{to}: {err}");
        }
    }
}

#[test]
fn approx_is_exact_on_noiseless_units() {
    // Without noise, equal labels imply equal features.
    let p = SyntheticProcess::new(spec(2, 1.0, 0.0)).unwrap();
    let data = generate(&p, 300, 0.2, 4).unwrap();
    let mut pool = ApproxPool::default();
    for i in 0..data.corpus.len() {
        if !SplitFilter::Test.contains(data.corpus.reviews()[i].split) {
            let labels = data.labels(i).map(|l| l.unwrap_or(Unk));
            pool.push(data.outputs[i].clone(), labels, data.corpus.reviews()[i].original_id.clone());
        }
    }
    let approx = ApproxExplainer::new(pool, ApproxConfig::default(), 0);
    let (mut truth, mut est) = (Vec::new(), Vec::new());
    for sp in &data.pairs {
        let r = &data.corpus.reviews()[sp.pair.base];
        if !SplitFilter::Test.contains(r.split) {
            continue;
        }
        let key = sp.pair.key(&data.corpus);
        let q = Query {
            index: 0,
            key: &key,
            base_group: &r.original_id,
            base_features: data.features.row(sp.pair.base),
            base_output: &data.outputs[sp.pair.base],
            edit_output: None,
            base_labels: Some(data.labels(sp.pair.base).map(|l| l.unwrap_or(Unk))),
            concept: sp.pair.concept,
            from: sp.pair.from_value,
            to: sp.pair.to_value,
        };
        if let Estimate::Effect { effect, flagged } = approx.explain(&q).unwrap() {
            if !flagged {
                truth.push(sp.true_icace.clone());
                est.push(effect);
            }
        }
    }
    assert!(truth.len() > 100);
    assert_eq!(icace_error(DistanceMetric::L2, &truth, &est), Some(0.0));
}

#[test]
fn small_synth_check_passes() {
    let config = SynthCheckConfig {
        n_train: 3000,
        n_test: 600,
        seeds: vec![0, 1],
        mc_bound: 4.0,
        // Fewer rows than the default run, so more passes to converge.
        slearner: TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        },
        ..SynthCheckConfig::default()
    };
    let report = run_synthcheck(&config).unwrap();
    assert!(report.passed(), "{}", report.to_text());
    assert_eq!(report.items.len(), 1 + 2 * 5);
    assert!(report.to_text().ends_with("11 checks, 0 failed\n"));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let p = SyntheticProcess::new(spec(3, 1.0, 0.2)).unwrap();
    let (a, b) = (generate(&p, 30, 0.3, 9).unwrap(), generate(&p, 30, 0.3, 9).unwrap());
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.pairs, b.pairs);
    assert_ne!(generate(&p, 30, 0.3, 10).unwrap().latents, a.latents);
    assert!(SyntheticProcess::new(spec(5, 0.0, 0.0)).is_err());
}
