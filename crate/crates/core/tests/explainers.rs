mod common;

use std::sync::OnceLock;

use rand::Rng as _;

use cebab_core::corpus::{AspectName, ConceptValue, Corpus, Review, SplitFilter, TaskGranularity};
use cebab_core::explainers::*;
use cebab_core::features::{featurize_all, FeatureMatrix, Featurizer, HashingConfig};
use cebab_core::model::*;
use cebab_core::rng::substream;
use cebab_core::synthgen::{generate, SyntheticProcess, SyntheticSpec};

use ConceptValue::{Negative as Neg, Positive as Pos, Unknown as Unk};

fn query<'a>(x: &'a [f64], out: &'a [f64], concept: AspectName, from: ConceptValue, to: ConceptValue) -> Query<'a> {
    Query {
        index: 0,
        key: "q",
        base_group: "g",
        base_features: x,
        base_output: out,
        edit_output: None,
        base_labels: None,
        concept,
        from,
        to,
    }
}

fn effect(e: Estimate) -> EffectVector {
    e.as_effect().cloned().unwrap_or_else(|| panic!("expected an effect, got {e:?}"))
}

/// Fixture corpus with hashed features, a trained 5-way linear model and
/// concept-presence labels over the training split.
struct Setup {
    corpus: Corpus,
    train: Vec<usize>,
    features: FeatureMatrix,
    labels: Vec<usize>,
    model: ClassifierHead,
    presence: [Vec<Option<bool>>; 4],
}

fn setup() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = common::fixture();
        let g = TaskGranularity::FiveWay;
        let train: Vec<usize> = corpus
            .select(SplitFilter::Train)
            .into_iter()
            .filter(|i| corpus.reviews()[*i].stars().is_some())
            .collect();
        let reviews: Vec<&Review> = train.iter().map(|i| &corpus.reviews()[*i]).collect();
        let fz = Featurizer::Hashed(HashingConfig {
            dim: 256,
            ..HashingConfig::default()
        });
        let features = featurize_all(&fz, &reviews).unwrap();
        let labels: Vec<usize> = reviews
            .iter()
            .map(|r| g.class_of_stars(r.stars().unwrap()).unwrap())
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 20,
            ..TrainConfig::default()
        };
        let (model, _) = train_head(&features, &labels, 5, Architecture::Linear, &cfg).unwrap();
        let presence = AspectName::ALL.map(|a| concept_presence(&reviews, a));
        Setup {
            corpus,
            train,
            features,
            labels,
            model,
            presence,
        }
    })
}

// ---- Random ----

#[test]
fn random_draws_are_zero_sum_and_bounded() {
    let r = RandomExplainer::new(4, 5).unwrap();
    for i in 0..1000 {
        let e = r.draw(i);
        assert!(e.sum().abs() < 1e-12);
        assert!(e.values.iter().all(|v| v.abs() < 1.0));
        assert_eq!(e, r.draw(i));
    }
    assert_ne!(r.draw(0), r.draw(1));
    assert!(RandomExplainer::new(0, 1).is_err());
}

// ---- Approx ----

#[test]
fn approx_with_true_counterfactual_returns_observed_effect() {
    let labels = [Pos, Unk, Neg, Unk];
    let mut target = labels;
    target[0] = Neg;
    let mut pool = ApproxPool::default();
    pool.push(vec![0.2, 0.8], target, "g".into());
    pool.push(vec![0.6, 0.4], [Pos, Pos, Pos, Pos], "h".into());
    let approx = ApproxExplainer::new(pool, ApproxConfig { exclude_same_original: false }, 0);
    let mut q = query(&[], &[0.7, 0.3], AspectName::Food, Pos, Neg);
    q.base_labels = Some(labels);
    let e = approx.explain(&q).unwrap();
    match &e {
        Estimate::Effect { flagged, .. } => assert!(!flagged),
        other => panic!("{other:?}"),
    }
    let observed = EffectVector::difference(&[0.2, 0.8], &[0.7, 0.3]);
    assert_eq!(effect(e), observed);
}

#[test]
fn approx_pool_of_base_only_gives_zero_for_identity_edit() {
    let labels = [Pos, Unk, Neg, Unk];
    let mut pool = ApproxPool::default();
    pool.push(vec![0.3, 0.7], labels, "g".into());
    let approx = ApproxExplainer::new(pool, ApproxConfig { exclude_same_original: false }, 0);
    let mut q = query(&[], &[0.3, 0.7], AspectName::Service, Unk, Unk);
    q.base_labels = Some(labels);
    assert_eq!(effect(approx.explain(&q).unwrap()).values, vec![0.0, 0.0]);
}

#[test]
fn approx_falls_back_and_flags_then_reports_unavailable() {
    let mut pool = ApproxPool::default();
    pool.push(vec![0.1, 0.9], [Neg, Neg, Neg, Neg], "h".into());
    let approx = ApproxExplainer::new(pool, ApproxConfig::default(), 0);
    let mut q = query(&[], &[0.5, 0.5], AspectName::Food, Pos, Neg);
    q.base_labels = Some([Pos, Pos, Pos, Pos]);
    match approx.explain(&q).unwrap() {
        Estimate::Effect { flagged, .. } => assert!(flagged),
        other => panic!("{other:?}"),
    }
    q.to = Unk;
    assert!(matches!(approx.explain(&q).unwrap(), Estimate::Unavailable(_)));
    // Same-original items are skipped by default.
    q.base_group = "h";
    q.to = Neg;
    assert!(matches!(approx.explain(&q).unwrap(), Estimate::Unavailable(_)));
}

// ---- CONEXP ----

#[test]
fn conexp_hand_example() {
    let outputs = vec![vec![0.9, 0.1], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.4, 0.6]];
    let labels = [Pos, Pos, Neg, Neg].map(|v| [Some(v), None, None, None]);
    let ce = ConexpExplainer::fit(&outputs, &labels).unwrap();
    let e = ce.estimate(AspectName::Food, Neg, Pos).unwrap();
    assert!((e.values[0] - 0.5).abs() < 1e-12 && (e.values[1] + 0.5).abs() < 1e-12);
    assert_eq!(ce.estimate(AspectName::Food, Pos, Pos).unwrap().values, vec![0.0, 0.0]);
    assert_eq!(ce.count(AspectName::Food, Pos), 2);
    let a = effect(ce.explain(&query(&[1.0], &[0.5, 0.5], AspectName::Food, Neg, Pos)).unwrap());
    let b = effect(ce.explain(&query(&[-3.0], &[0.9, 0.1], AspectName::Food, Neg, Pos)).unwrap());
    assert_eq!(a, b);
    assert!(matches!(
        ce.estimate(AspectName::Food, Neg, Unk),
        Err(cebab_core::Error::Undefined(msg)) if msg.contains("food") && msg.contains("unknown")
    ));
}

// ---- S-Learner ----

fn soft(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let d = rows[0].len();
    FeatureMatrix::from_rows(d, rows).unwrap()
}

#[test]
fn slearner_identity_edit_and_constant_targets() {
    let labels: Vec<[Option<ConceptValue>; 4]> = (0..60)
        .map(|i| [0, 1, 2, 3].map(|a| ConceptValue::from_index((i + a) % 3)))
        .collect();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 300,
        batch_size: 16,
        ..TrainConfig::default()
    };
    // Uniform targets leave the zero-initialized regressor untouched.
    let (uniform, _) = SLearnerExplainer::fit(&labels, &soft(vec![vec![0.5, 0.5]; 60]), &cfg).unwrap();
    // A constant non-uniform target is matched by the bias alone.
    let (skewed, _) = SLearnerExplainer::fit(&labels, &soft(vec![vec![0.8, 0.2]; 60]), &cfg).unwrap();
    for (from, to) in [(Neg, Pos), (Unk, Neg), (Pos, Pos)] {
        let mut q = query(&[], &[0.5, 0.5], AspectName::Ambiance, from, to);
        q.base_labels = Some([Pos, Neg, Unk, Pos]);
        assert_eq!(effect(uniform.explain(&q).unwrap()).values, vec![0.0, 0.0]);
        let e = effect(skewed.explain(&q).unwrap());
        assert!(e.norm() < 1e-3, "{e:?}");
        if from == to {
            assert_eq!(e.values, vec![0.0, 0.0]);
        }
    }
}

// ---- CAV and TCAV ----

#[test]
fn cav_on_separable_toy_concept() {
    let mut rng = substream(1, "toy");
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let mut v = common::gaussian(&mut rng, 6);
            v[0] = if i % 2 == 0 { 2.0 + v[0].abs() } else { -2.0 - v[0].abs() };
            v
        })
        .collect();
    let x = FeatureMatrix::from_rows(6, rows).unwrap();
    let presence: Vec<Option<bool>> = (0..200).map(|i| Some(i % 2 == 0)).collect();
    let cfg = SvmConfig::default();
    let cav = fit_cav(&x, &presence, AspectName::Noise, &cfg).unwrap();
    assert_eq!(cav.heldout_accuracy, 1.0);
    assert!((cav.weights.iter().map(|w| w * w).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(fit_cav(&x, &presence, AspectName::Noise, &cfg).unwrap(), cav);
    // Artifacts store f32 weights.
    let back = ConceptDirection::from_bytes(&cav.to_bytes().unwrap()).unwrap();
    assert!(back.weights.iter().zip(&cav.weights).all(|(a, b)| (a - b).abs() < 1e-7));
    assert_eq!((back.aspect, back.bias), (cav.aspect, cav.bias));
    let one_class: Vec<Option<bool>> = vec![Some(true); 200];
    assert!(matches!(fit_cav(&x, &one_class, AspectName::Noise, &cfg), Err(cebab_core::Error::Fit(_))));
}

#[test]
fn cav_points_toward_concept_presence_on_fixture() {
    let s = setup();
    for a in AspectName::ALL {
        let cav = fit_cav(&s.features, &s.presence[a.index()], a, &SvmConfig::default()).unwrap();
        let mean_margin = |want: bool| {
            let m: Vec<f64> = (0..s.features.rows())
                .filter(|i| s.presence[a.index()][*i] == Some(want))
                .map(|i| cav.margin(s.features.row(i)))
                .collect();
            m.iter().sum::<f64>() / m.len() as f64
        };
        assert!(mean_margin(true) > mean_margin(false), "{a}");
    }
}

fn unit_cav(aspect: AspectName, weights: Vec<f64>) -> ConceptDirection {
    ConceptDirection {
        aspect,
        weights,
        bias: 0.0,
        heldout_accuracy: 1.0,
        epochs: 1,
    }
}

#[test]
fn tcav_estimates() {
    let dim = 4;
    let cavs = |w: Vec<f64>| AspectName::ALL.map(|a| unit_cav(a, w.clone())).to_vec();
    let zero = TcavExplainer::new(ClassifierHead::zeros(Architecture::Mlp { hidden: 3 }, dim, 3), cavs(vec![0.5; 4]), false).unwrap();
    assert_eq!(zero.estimate(&[1.0, 2.0, 3.0, 4.0], AspectName::Food).unwrap().values, vec![0.0; 3]);

    let mut rng = substream(2, "tcav");
    let linear = ClassifierHead::init(Architecture::Linear, dim, 3, &mut rng);
    let t = TcavExplainer::new(linear, cavs(vec![0.5; 4]), false).unwrap();
    let a = t.estimate(&[0.0; 4], AspectName::Service).unwrap();
    let b = t.estimate(&[3.0, -1.0, 0.2, 7.0], AspectName::Service).unwrap();
    assert_eq!(a, b);

    let mlp = ClassifierHead::init(Architecture::Mlp { hidden: 8 }, dim, 3, &mut rng);
    let t = TcavExplainer::new(mlp, cavs(vec![0.5; 4]), false).unwrap();
    for _ in 0..100 {
        let x: Vec<f64> = common::gaussian(&mut rng, dim).iter().map(|v| v * 5.0).collect();
        assert!(t.estimate(&x, AspectName::Noise).unwrap().values.iter().all(|v| v.abs() < 1.0));
    }
    assert!(TcavExplainer::new(ClassifierHead::zeros(Architecture::Linear, dim, 2), cavs(vec![1.0; 4])[..3].to_vec(), false).is_err());
}

#[test]
fn tcav_count_extremes_and_symmetry() {
    // Linear head whose class-0 gradient is v.
    let v = vec![0.6, 0.8];
    let head = ClassifierHead::from_params(Architecture::Linear, 2, 2, vec![0.6, 0.8, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let cav = unit_cav(AspectName::Food, v.clone());
    let x = FeatureMatrix::from_rows(2, vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![3.0, 3.0]]).unwrap();
    assert_eq!(tcav_count(&head, &x, 0, &cav).unwrap(), 1.0);
    assert_eq!(tcav_count(&head, &x, 1, &cav).unwrap(), 0.0);
    assert!(tcav_count(&head, &FeatureMatrix::new(2), 0, &cav).is_err());

    // Random models, directions and inputs: the sign is a fair coin.
    let mut rng = substream(9, "tcav_mc");
    let n = 10_000;
    let mut total = 0.0;
    for _ in 0..n {
        let (head, x) = common::random_head_and_input(&mut rng);
        let dir = common::gaussian(&mut rng, head.input_dim());
        let row = FeatureMatrix::from_rows(head.input_dim(), vec![x]).unwrap();
        let k = rng.random_range(0..head.classes());
        total += tcav_count(&head, &row, k, &unit_cav(AspectName::Food, dir)).unwrap();
    }
    assert!((total / n as f64 - 0.5).abs() < 0.05);
}

// ---- ConceptSHAP ----

#[test]
fn shapley_coefficients() {
    assert!((shapley_weight(4, 0) - 0.25).abs() < 1e-15);
    assert!((shapley_weight(4, 1) - 1.0 / 12.0).abs() < 1e-15);
    let total: f64 = (0..4).map(|s| {
        let choose = [1.0, 3.0, 3.0, 1.0][s];
        choose * shapley_weight(4, s)
    }).sum();
    assert!((total - 1.0).abs() < 1e-15);
}

/// Sixteen eta heads sharing one network; subset `S` keeps the `w1`
/// columns of its aspects. `dead` zeroes one aspect's column.
fn masked_etas(model: &ClassifierHead, dirs: &[Vec<f64>; 4], dead: Option<AspectName>, seed: u64) -> Vec<EtaHead> {
    let (h, hidden) = (model.input_dim(), 6);
    let mut rng = substream(seed, "eta");
    let mut w1 = common::gaussian(&mut rng, hidden * 4);
    if let Some(a) = dead {
        (0..hidden).for_each(|r| w1[r * 4 + a.index()] = 0.0);
    }
    let b1 = common::gaussian(&mut rng, hidden);
    let w2 = common::gaussian(&mut rng, h * hidden);
    let b2 = common::gaussian(&mut rng, h);
    Subset::all()
        .map(|s| {
            let cols = s.aspects();
            let sub_w1: Vec<f64> = (0..hidden)
                .flat_map(|r| cols.iter().map(move |a| (r, a.index())))
                .map(|(r, c)| w1[r * 4 + c])
                .collect();
            let sub_dirs = cols.iter().map(|a| dirs[a.index()].clone()).collect();
            EtaHead::from_parts(s, sub_dirs, hidden, sub_w1, b1.clone(), w2.clone(), b2.clone(), model.clone()).unwrap()
        })
        .collect()
}

#[test]
fn conceptshap_efficiency_null_player_and_empty_subset() {
    let mut rng = substream(4, "cs");
    let model = ClassifierHead::init(Architecture::Mlp { hidden: 5 }, 8, 3, &mut rng);
    let dirs = [0, 1, 2, 3].map(|_| common::gaussian(&mut rng, 8));
    let cs = ConceptShapExplainer::new(masked_etas(&model, &dirs, None, 1)).unwrap();
    let dead = ConceptShapExplainer::new(masked_etas(&model, &dirs, Some(AspectName::Ambiance), 1)).unwrap();
    for _ in 0..50 {
        let x = common::gaussian(&mut rng, 8);
        let full = cs.eta(Subset::FULL).predict(&x).unwrap();
        let empty = cs.eta(Subset::EMPTY).predict(&x).unwrap();
        let mut sum = vec![0.0; 3];
        for a in AspectName::ALL {
            for (t, v) in sum.iter_mut().zip(cs.estimate(&x, a).unwrap().values) {
                *t += v;
            }
        }
        for k in 0..3 {
            assert!((sum[k] - (full[k] - empty[k])).abs() < 1e-6);
        }
        assert!(dead.estimate(&x, AspectName::Ambiance).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        let other = common::gaussian(&mut rng, 8);
        assert_eq!(empty, cs.eta(Subset::EMPTY).predict(&other).unwrap());
    }
    assert!(ConceptShapExplainer::new(masked_etas(&model, &dirs, None, 1)[..15].to_vec()).is_err());
}

#[test]
fn conceptshap_nested_subsets_fit_no_worse() {
    let s = setup();
    let cavs: Vec<ConceptDirection> = AspectName::ALL
        .iter()
        .map(|a| fit_cav(&s.features, &s.presence[a.index()], *a, &SvmConfig::default()).unwrap())
        .collect();
    let chain = [Subset::EMPTY, Subset(0b0001), Subset(0b0011), Subset(0b0111), Subset::FULL];
    let mut fits = vec![Vec::new(); chain.len()];
    for seed in 0..5 {
        let cfg = EtaConfig {
            hidden: 32,
            train: TrainConfig {
                learning_rate: 1e-2,
                epochs: 15,
                batch_size: 128,
                seed,
                ..TrainConfig::default()
            },
        };
        for (i, subset) in chain.iter().enumerate() {
            let (_, report) = fit_eta(*subset, &cavs, &s.features, &s.model, &cfg).unwrap();
            fits[i].push(report.train_accuracy);
        }
    }
    // Tolerance: three standard deviations of the seed spread.
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, sd)
    };
    for w in fits.windows(2) {
        let ((small, sd_a), (large, sd_b)) = (stats(&w[0]), stats(&w[1]));
        let tol = 3.0 * sd_a.max(sd_b).max(0.005);
        assert!(large >= small - tol, "{small} -> {large} (tol {tol})");
    }
}

// ---- INLP ----

fn symmetric_idempotent(p: &InlpProjection) {
    let m = p.matrix().unwrap();
    let d = p.dim;
    let mut pp = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let pik = m[i * d + k];
            if pik != 0.0 {
                for j in 0..d {
                    pp[i * d + j] += pik * m[k * d + j];
                }
            }
        }
    }
    assert!(pp.iter().zip(&m).all(|(x, y)| (x - y).abs() < 1e-8));
    assert!(m.iter().enumerate().all(|(i, v)| (v - m[(i % d) * d + i / d]).abs() < 1e-12));
}

#[test]
fn inlp_projection_contract_on_fixture() {
    let s = setup();
    let cfg = InlpConfig::default();
    for a in AspectName::ALL {
        let p = fit_inlp(&s.features, &s.presence[a.index()], a, &cfg).unwrap();
        symmetric_idempotent(&p);
        let nondegenerate = p.separators.iter().filter(|w| w.iter().any(|v| *v != 0.0)).count();
        assert_eq!(p.basis().len(), nondegenerate);
        assert_eq!(p.rank(), p.dim - p.basis().len());
        assert_eq!(p.probe_accuracy.len(), cfg.iterations + 1);
        assert!(p.probe_accuracy[cfg.iterations] - p.majority_baseline <= 0.05, "{a}");
        let back = InlpProjection::from_bytes(&p.to_bytes().unwrap()).unwrap();
        assert_eq!(back.basis().len(), p.basis().len());
    }
    // Ambiance is linearly decodable before projection.
    let p = fit_inlp(&s.features, &s.presence[2], AspectName::Ambiance, &cfg).unwrap();
    assert!(p.probe_accuracy[0] > p.majority_baseline + 0.1);
}

#[test]
fn inlp_estimator_shape() {
    let mut rng = substream(6, "inlp");
    let model = ClassifierHead::init(Architecture::Mlp { hidden: 4 }, 5, 3, &mut rng);
    let ident = InlpExplainer::from_parts(
        AspectName::ALL.map(|a| InlpProjection::identity(a, 5)).to_vec(),
        vec![model.clone(); 4],
    )
    .unwrap();
    let x = common::gaussian(&mut rng, 5);
    let out = model.predict_proba(&x).unwrap();
    assert_eq!(effect(ident.explain(&query(&x, &out, AspectName::Food, Pos, Unk)).unwrap()).values, vec![0.0; 3]);
    assert_eq!(ident.explain(&query(&x, &out, AspectName::Food, Unk, Pos)).unwrap(), Estimate::NotApplicable);
    assert_eq!(ident.applicability(), Applicability::TowardUnknown);

    let s = setup();
    let fitted = InlpExplainer::fit(&s.model, &s.features, &s.labels, &s.presence, &InlpConfig::default()).unwrap();
    let x = s.features.row(0);
    let out = s.model.predict_proba(x).unwrap();
    let e_pos = effect(fitted.explain(&query(x, &out, AspectName::Service, Pos, Unk)).unwrap());
    let e_neg = effect(fitted.explain(&query(x, &out, AspectName::Service, Neg, Unk)).unwrap());
    assert!(e_pos.sum().abs() < 1e-9);
    assert_eq!(e_pos, e_neg);
}

// ---- CausaLM ----

fn synthetic_task(seed: u64) -> (FeatureMatrix, Vec<usize>, Vec<[Option<ConceptValue>; 4]>) {
    let process = SyntheticProcess::new(SyntheticSpec {
        sigma: 1.0,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let data = generate(&process, 400, 0.0, seed).unwrap();
    let rows: Vec<usize> = (0..data.corpus.len()).collect();
    let labels = rows
        .iter()
        .map(|i| {
            let o = &data.outputs[*i];
            (0..o.len()).fold(0, |b, k| if o[k] > o[b] { k } else { b })
        })
        .collect();
    let aspects = rows.iter().map(|i| data.labels(*i)).collect();
    (data.features.clone(), labels, aspects)
}

fn causalm_config(lambda: f64, seed: u64) -> CausalmConfig {
    let train = TrainConfig {
        learning_rate: 1e-2,
        epochs: 30,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    };
    // Narrower than the 16 input features, so removing the treatment costs
    // the encoder little.
    CausalmConfig {
        representation_dim: 8,
        lambda,
        encoder_train: train.clone(),
        head_train: train,
        head_architecture: Architecture::Linear,
        probe_holdout: 0.2,
    }
}

#[test]
fn causalm_adversary_and_control() {
    let (x, y, aspects) = synthetic_task(3);
    let mut without = Vec::new();
    let mut with = Vec::new();
    for seed in 0..5 {
        let a = fit_causalm(&x, &y, 3, &aspects, AspectName::Food, &causalm_config(0.0, seed)).unwrap();
        let b = fit_causalm(&x, &y, 3, &aspects, AspectName::Food, &causalm_config(0.1, seed)).unwrap();
        without.push(a.treatment_probe_accuracy);
        with.push(b.treatment_probe_accuracy);
        let (ctrl, base) = (b.control_probe_accuracy.unwrap(), b.control_majority_rate.unwrap());
        assert!(ctrl >= base + 0.05, "control probe {ctrl} vs majority {base}");
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&without) >= mean(&with), "{without:?} vs {with:?}");
}

#[test]
fn causalm_determinism_and_estimator_shape() {
    let (x, y, aspects) = synthetic_task(5);
    let cfg = causalm_config(0.1, 2);
    let a = fit_causalm(&x, &y, 3, &aspects, AspectName::Service, &cfg).unwrap();
    assert_eq!(a, fit_causalm(&x, &y, 3, &aspects, AspectName::Service, &cfg).unwrap());

    let mut rng = substream(8, "causalm");
    let model = ClassifierHead::init(Architecture::Linear, x.dim(), 3, &mut rng);
    let ident = CausalmExplainer::new(AspectName::ALL.map(|t| CausalmEncoder::identity(t, model.clone())).to_vec()).unwrap();
    let out = model.predict_proba(x.row(0)).unwrap();
    assert_eq!(effect(ident.explain(&query(x.row(0), &out, AspectName::Noise, Neg, Unk)).unwrap()).values, vec![0.0; 3]);
    assert_eq!(ident.explain(&query(x.row(0), &out, AspectName::Noise, Unk, Neg)).unwrap(), Estimate::NotApplicable);

    let e0 = a.estimate(x.row(0), &model.predict_proba(x.row(0)).unwrap()).unwrap();
    let e1 = a.estimate(x.row(1), &model.predict_proba(x.row(1)).unwrap()).unwrap();
    assert!(e0.sum().abs() < 1e-9 && e1.sum().abs() < 1e-9);
    assert_ne!(e0, e1);
}

#[test]
fn fixture_setup_is_nontrivial() {
    let s = setup();
    assert_eq!(s.train.len(), s.features.rows());
    assert!(s.train.iter().all(|i| s.corpus.reviews()[*i].split.is_train()));
    assert!(accuracy(&s.model, &s.features, &s.labels) > 0.3);
}
