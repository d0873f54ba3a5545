use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{key_hash, ArtifactCache, CacheStatus};
use super::config::{CorpusSpec, ExperimentConfig, ExplainerOptions, FeaturizerSpec};
use crate::corpus::{
    build_edit_pairs, load_corpus, map_labels, AspectName, ConceptValue, Corpus, EditPair, SchemaMap, SplitFilter,
    TaskGranularity,
};
use crate::explainers::{
    concept_presence, fit_causalm, fit_cav, ApproxExplainer, ApproxPool, CausalmExplainer, ConceptDirection,
    ConceptShapExplainer, ConexpExplainer, EffectVector, Estimate, Explainer, InlpExplainer, OracleExplainer,
    Query, RandomExplainer, SLearnerExplainer, Subset, TcavExplainer,
};
use crate::features::{featurize_all, load_embedding_table, FeatureMatrix, Featurizer};
use crate::model::{
    accuracy, head_from_bytes, head_to_bytes, macro_f1, train_aspect_set, train_head, AspectClassifierSet,
    AspectLabels, ClassifierHead,
};
use crate::synthgen::{generate, SyntheticProcess};
use crate::{Error, Result};

/// Corpus with one feature row per review, shared by all seeds.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub corpus: Corpus,
    pub corpus_hash: String,
    pub features: FeatureMatrix,
    pub featurizer: String,
    /// Identifies the feature space in cache keys.
    pub feature_key: String,
}

pub fn load_corpus_spec(spec: &CorpusSpec, granularity: TaskGranularity) -> Result<(Corpus, Option<FeatureMatrix>)> {
    match spec {
        CorpusSpec::Path { schema, .. } => {
            let path = spec.resolve_path()?.expect("path corpus");
            if !path.exists() {
                return Err(Error::CorpusMissing(format!(
                    "{} does not exist; {}",
                    path.display(),
                    super::config::DOWNLOAD_HINT
                )));
            }
            let schema = match schema {
                Some(p) => SchemaMap::from_json_file(p)?,
                None => SchemaMap::default(),
            };
            Ok((load_corpus(&path, &schema)?, None))
        }
        CorpusSpec::Synthetic {
            spec,
            originals,
            test_fraction,
            seed,
        } => {
            let mut spec = spec.clone();
            spec.granularity = granularity;
            let process = SyntheticProcess::new(spec)?;
            let data = generate(&process, *originals, *test_fraction, *seed)?;
            Ok((data.corpus, Some(data.features)))
        }
    }
}

impl Workspace {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let (corpus, native) = load_corpus_spec(&config.corpus, config.granularity)?;
        let refs: Vec<_> = corpus.reviews().iter().collect();
        let (features, featurizer, feature_key) = match &config.featurizer {
            FeaturizerSpec::Native => {
                let f = native.ok_or_else(|| Error::Config("the native featurizer needs a synthetic corpus".into()))?;
                (f, "synthetic-emission".to_string(), "native".to_string())
            }
            FeaturizerSpec::Hashed { .. } => {
                let f = Featurizer::Hashed(config.featurizer.hashing().expect("hashed spec"));
                let key = serde_json::to_string(&config.featurizer).expect("spec serializes");
                (featurize_all(&f, &refs)?, f.provenance(), key)
            }
            FeaturizerSpec::Embeddings { path } => {
                let table = load_embedding_table(path)?;
                let key = format!("cebe:{}", table.manifest().sha256);
                let f = Featurizer::Table(table);
                (featurize_all(&f, &refs)?, f.provenance(), key)
            }
        };
        let corpus_hash = corpus.content_hash();
        Ok(Workspace {
            corpus,
            corpus_hash,
            features,
            featurizer,
            feature_key,
        })
    }

    fn aspect_truth(&self, i: usize) -> [Option<ConceptValue>; 4] {
        let r = &self.corpus.reviews()[i];
        AspectName::ALL.map(|a| r.aspect_value(a))
    }
}

/// Task-labeled training rows.
struct TaskRows {
    rows: Vec<usize>,
    labels: Vec<usize>,
    features: FeatureMatrix,
}

fn task_rows(ws: &Workspace, filter: SplitFilter, granularity: TaskGranularity) -> TaskRows {
    let data = map_labels(&ws.corpus, &ws.corpus.select(filter), granularity);
    let rows: Vec<usize> = data.items.iter().map(|it| it.review).collect();
    TaskRows {
        labels: data.items.iter().map(|it| it.class).collect(),
        features: ws.features.select(&rows),
        rows,
    }
}

/// The explained model and the aspect classifiers of one seed.
#[derive(Clone, Debug)]
pub struct SeedModels {
    pub seed: u64,
    pub model: ClassifierHead,
    pub aspects: AspectClassifierSet,
    pub cache: BTreeMap<String, CacheStatus>,
}

#[derive(Serialize)]
struct ModelKey<'a, T: Serialize> {
    section: &'a str,
    spec: &'a T,
    features: &'a str,
    granularity: Option<TaskGranularity>,
    corpus: &'a str,
    seed: u64,
}

/// Trains, or loads from the cache, the model and aspect classifiers on the
/// exclusive training split.
pub fn train_models(config: &ExperimentConfig, ws: &Workspace, cache: &ArtifactCache, seed: u64) -> Result<SeedModels> {
    let g = config.granularity;
    let train = task_rows(ws, SplitFilter::TrainExclusive, g);
    if train.rows.is_empty() {
        return Err(Error::Fit("no task-labeled rows in the exclusive training split".into()));
    }
    let mut statuses = BTreeMap::new();

    let key = key_hash(&ModelKey {
        section: "model",
        spec: &config.model,
        features: &ws.feature_key,
        granularity: Some(g),
        corpus: &ws.corpus_hash,
        seed,
    })?;
    let (model, status) = cache.get_or_build(
        &format!("model-s{seed}"),
        &key,
        |b| head_from_bytes(b).map(|(h, _)| h),
        || {
            let cfg = config.model.train.clone().with_seed(seed);
            let (mut head, _) = train_head(&train.features, &train.labels, g.classes(), config.model.architecture, &cfg)?;
            head.quantize_f32();
            let bytes = head_to_bytes(&head, Some(&cfg))?;
            Ok((head, bytes))
        },
    )?;
    statuses.insert(format!("model-s{seed}"), status);

    let key = key_hash(&ModelKey {
        section: "aspect_model",
        spec: &config.aspect_model,
        features: &ws.feature_key,
        granularity: None,
        corpus: &ws.corpus_hash,
        seed,
    })?;
    let (aspects, status) = cache.get_or_build(
        &format!("aspects-s{seed}"),
        &key,
        AspectClassifierSet::from_bytes,
        || {
            let idx = ws.corpus.select(SplitFilter::TrainExclusive);
            let refs: Vec<_> = idx.iter().map(|i| &ws.corpus.reviews()[*i]).collect();
            let cfg = config.aspect_model.train.clone().with_seed(seed);
            let (mut set, _) = train_aspect_set(&ws.features.select(&idx), &refs, config.aspect_model.architecture, &cfg)?;
            set.quantize_f32();
            let bytes = set.to_bytes()?;
            Ok((set, bytes))
        },
    )?;
    statuses.insert(format!("aspects-s{seed}"), status);

    Ok(SeedModels {
        seed,
        model,
        aspects,
        cache: statuses,
    })
}

/// Held-out quality of the trained models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub seed: u64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub eval_macro_f1: f64,
    pub aspect_macro_f1: BTreeMap<AspectName, f64>,
}

pub fn model_diagnostics(config: &ExperimentConfig, ws: &Workspace, m: &SeedModels) -> Result<ModelDiagnostics> {
    let g = config.granularity;
    let train = task_rows(ws, SplitFilter::TrainExclusive, g);
    let eval = task_rows(ws, config.eval_split, g);
    let predicted: Vec<usize> = eval
        .features
        .iter()
        .map(|x| m.model.predict_class(x))
        .collect::<Result<_>>()?;
    let eval_idx = ws.corpus.select(config.eval_split);
    let refs: Vec<_> = eval_idx.iter().map(|i| &ws.corpus.reviews()[*i]).collect();
    Ok(ModelDiagnostics {
        seed: m.seed,
        train_accuracy: accuracy(&m.model, &train.features, &train.labels),
        eval_accuracy: accuracy(&m.model, &eval.features, &eval.labels),
        eval_macro_f1: macro_f1(&predicted, &eval.labels, g.classes()),
        aspect_macro_f1: m.aspects.macro_f1(&ws.features.select(&eval_idx), &refs)?,
    })
}

/// How an explainer fared on the evaluation pairs of one seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub estimated: usize,
    pub flagged: usize,
    pub not_applicable: usize,
    pub unavailable: usize,
}

/// Fit-time facts about an explainer worth reporting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplainerDiagnostics {
    pub coverage: Coverage,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
}

/// A fitted explainer plus artifacts to persist.
pub struct FittedExplainer {
    pub explainer: Box<dyn Explainer>,
    pub values: BTreeMap<String, f64>,
    pub artifacts: Vec<(String, Vec<u8>)>,
}

/// Everything the explainers may be fitted on for one seed.
pub struct FitContext<'a> {
    pub config: &'a ExperimentConfig,
    pub ws: &'a Workspace,
    pub models: &'a SeedModels,
    /// Model output for every review of the corpus.
    pub outputs: &'a [Vec<f64>],
    /// Predicted aspect labels for every review of the corpus.
    pub predicted: &'a [AspectLabels],
}

fn fit_cavs(ctx: &FitContext<'_>, svm: &crate::explainers::SvmConfig) -> Result<Vec<ConceptDirection>> {
    let idx = ctx.ws.corpus.select(SplitFilter::TrainExclusive);
    let refs: Vec<_> = idx.iter().map(|i| &ctx.ws.corpus.reviews()[*i]).collect();
    let x = ctx.ws.features.select(&idx);
    let mut cfg = svm.clone();
    cfg.seed = ctx.models.seed;
    AspectName::ALL
        .iter()
        .map(|a| fit_cav(&x, &concept_presence(&refs, *a), *a, &cfg))
        .collect()
}

fn cav_artifacts(cavs: &[ConceptDirection], values: &mut BTreeMap<String, f64>) -> Result<Vec<(String, Vec<u8>)>> {
    cavs.iter()
        .map(|c| {
            values.insert(format!("cav_heldout_accuracy/{}", c.aspect.as_str()), c.heldout_accuracy);
            Ok((format!("cav-{}.cebc", c.aspect.as_str()), c.to_bytes()?))
        })
        .collect()
}

pub fn fit_explainer(ctx: &FitContext<'_>, options: &ExplainerOptions) -> Result<FittedExplainer> {
    let seed = ctx.models.seed;
    let ws = ctx.ws;
    let g = ctx.config.granularity;
    let exclusive = ws.corpus.select(SplitFilter::TrainExclusive);
    let mut values = BTreeMap::new();
    let mut artifacts = Vec::new();
    let explainer: Box<dyn Explainer> = match options {
        ExplainerOptions::Oracle => Box::new(OracleExplainer),
        ExplainerOptions::Random => Box::new(RandomExplainer::new(seed, g.classes())?),
        ExplainerOptions::Approx(cfg) => {
            let mut pool = ApproxPool::default();
            for i in ws.corpus.select(ctx.config.eval_split) {
                let r = &ws.corpus.reviews()[i];
                pool.push(ctx.outputs[i].clone(), ctx.predicted[i], r.original_id.clone());
            }
            Box::new(ApproxExplainer::new(pool, cfg.clone(), seed))
        }
        ExplainerOptions::Conexp => {
            let outputs: Vec<Vec<f64>> = exclusive.iter().map(|i| ctx.outputs[*i].clone()).collect();
            let labels: Vec<_> = exclusive.iter().map(|i| ws.aspect_truth(*i)).collect();
            Box::new(ConexpExplainer::fit(&outputs, &labels)?)
        }
        ExplainerOptions::Slearner(opts) => {
            let outputs = FeatureMatrix::from_rows(g.classes(), exclusive.iter().map(|i| ctx.outputs[*i].clone()))?;
            let labels: Vec<_> = exclusive.iter().map(|i| ws.aspect_truth(*i)).collect();
            let (s, report) = SLearnerExplainer::fit(&labels, &outputs, &opts.train.clone().with_seed(seed))?;
            if let Some(loss) = report.loss_history.last() {
                values.insert("final_loss".into(), *loss);
            }
            artifacts.push(("slearner.cebh".into(), head_to_bytes(s.head(), Some(&opts.train))?));
            Box::new(s)
        }
        ExplainerOptions::Tcav(opts) => {
            let cavs = fit_cavs(ctx, &opts.svm)?;
            artifacts.extend(cav_artifacts(&cavs, &mut values)?);
            Box::new(TcavExplainer::new(ctx.models.model.clone(), cavs, opts.raw)?)
        }
        ExplainerOptions::Conceptshap(opts) => {
            let cavs = fit_cavs(ctx, &opts.svm)?;
            let _ = cav_artifacts(&cavs, &mut values)?;
            let x = ws.features.select(&exclusive);
            let mut eta = opts.eta.clone();
            eta.train.seed = seed;
            let (shap, _) = ConceptShapExplainer::fit(&ctx.models.model, &cavs, &x, &eta)?;
            let eval = task_rows(ws, ctx.config.eval_split, g);
            let full = shap.eta(Subset::FULL);
            match crate::explainers::completeness(full, &ctx.models.model, &eval.features, &eval.labels) {
                Ok(c) => {
                    values.insert("completeness".into(), c);
                }
                Err(Error::Undefined(_)) => {}
                Err(e) => return Err(e),
            }
            Box::new(shap)
        }
        ExplainerOptions::Inlp(cfg) => {
            let train = task_rows(ws, SplitFilter::TrainExclusive, g);
            let refs: Vec<_> = train.rows.iter().map(|i| &ws.corpus.reviews()[*i]).collect();
            let presence = AspectName::ALL.map(|a| concept_presence(&refs, a));
            let mut cfg = cfg.clone();
            cfg.svm.seed = seed;
            cfg.finetune.seed = seed;
            let inlp = InlpExplainer::fit(&ctx.models.model, &train.features, &train.labels, &presence, &cfg)?;
            for a in AspectName::ALL {
                let p = inlp.projection(a);
                values.insert(format!("probe_accuracy/{}", a.as_str()), *p.probe_accuracy.last().unwrap_or(&f64::NAN));
                values.insert(format!("majority_baseline/{}", a.as_str()), p.majority_baseline);
                values.insert(format!("rank_removed/{}", a.as_str()), p.basis().len() as f64);
                artifacts.push((format!("inlp-{}.cebp", a.as_str()), p.to_bytes()?));
            }
            Box::new(inlp)
        }
        ExplainerOptions::Causalm(cfg) => {
            let train = task_rows(ws, SplitFilter::TrainExclusive, g);
            let labels: Vec<_> = train.rows.iter().map(|i| ws.aspect_truth(*i)).collect();
            let mut cfg = cfg.clone();
            cfg.encoder_train.seed = seed;
            cfg.head_train.seed = seed;
            let encoders = AspectName::ALL
                .iter()
                .map(|a| fit_causalm(&train.features, &train.labels, g.classes(), &labels, *a, &cfg))
                .collect::<Result<Vec<_>>>()?;
            for e in &encoders {
                let a = e.treatment.as_str();
                values.insert(format!("treatment_probe_accuracy/{a}"), e.treatment_probe_accuracy);
                values.insert(format!("treatment_majority_rate/{a}"), e.treatment_majority_rate);
            }
            Box::new(CausalmExplainer::new(encoders)?)
        }
    };
    Ok(FittedExplainer {
        explainer,
        values,
        artifacts,
    })
}

/// Per-pair estimates of one explainer, aligned with the evaluation pairs.
pub struct ExplainerRun {
    pub name: String,
    pub applicability: crate::explainers::Applicability,
    pub uses_test_time_labels: bool,
    pub estimates: Vec<Option<EffectVector>>,
    pub diagnostics: ExplainerDiagnostics,
}

/// Evaluation pairs with the model's view of them.
pub struct EvalPairs {
    pub pairs: Vec<EditPair>,
    pub keys: Vec<String>,
    pub observed: Vec<EffectVector>,
    pub predicted_classes: Vec<(usize, usize)>,
}

pub fn eval_pairs(ws: &Workspace, filter: SplitFilter, outputs: &[Vec<f64>]) -> EvalPairs {
    let pairs = build_edit_pairs(&ws.corpus, filter);
    let argmax = crate::linalg::argmax;
    EvalPairs {
        keys: pairs.iter().map(|p| p.key(&ws.corpus)).collect(),
        observed: pairs
            .iter()
            .map(|p| EffectVector::difference(&outputs[p.edit], &outputs[p.base]))
            .collect(),
        predicted_classes: pairs.iter().map(|p| (argmax(&outputs[p.base]), argmax(&outputs[p.edit]))).collect(),
        pairs,
    }
}

pub fn run_explainer(
    ws: &Workspace,
    eval: &EvalPairs,
    outputs: &[Vec<f64>],
    predicted: &[AspectLabels],
    fitted: FittedExplainer,
) -> Result<ExplainerRun> {
    let e = fitted.explainer.as_ref();
    let applicability = e.applicability();
    let results: Vec<Option<Estimate>> = eval
        .pairs
        .par_iter()
        .enumerate()
        .map(|(q, p)| {
            if !applicability.allows(p.to_value) {
                return Ok(None);
            }
            let query = Query {
                index: q as u64,
                key: &eval.keys[q],
                base_group: &ws.corpus.reviews()[p.base].original_id,
                base_features: ws.features.row(p.base),
                base_output: &outputs[p.base],
                edit_output: Some(&outputs[p.edit]),
                base_labels: Some(predicted[p.base]),
                concept: p.concept,
                from: p.from_value,
                to: p.to_value,
            };
            e.explain(&query).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut coverage = Coverage::default();
    let estimates = results
        .into_iter()
        .map(|r| match r {
            None => {
                coverage.not_applicable += 1;
                None
            }
            Some(Estimate::NotApplicable) => {
                coverage.not_applicable += 1;
                None
            }
            Some(Estimate::Unavailable(_)) => {
                coverage.unavailable += 1;
                None
            }
            Some(Estimate::Effect { effect, flagged }) => {
                coverage.estimated += 1;
                coverage.flagged += flagged as usize;
                Some(effect)
            }
        })
        .collect();
    Ok(ExplainerRun {
        name: e.name().to_string(),
        applicability,
        uses_test_time_labels: e.uses_test_time_labels(),
        estimates,
        diagnostics: ExplainerDiagnostics {
            coverage,
            values: fitted.values,
        },
    })
}

/// Model outputs and predicted aspect labels for every review.
pub fn corpus_outputs(ws: &Workspace, models: &SeedModels) -> Result<(Vec<Vec<f64>>, Vec<AspectLabels>)> {
    let rows: Vec<&[f64]> = ws.features.iter().collect();
    let outputs = rows
        .par_iter()
        .map(|x| models.model.predict_proba(x))
        .collect::<Result<Vec<_>>>()?;
    let predicted = rows
        .par_iter()
        .map(|x| models.aspects.predict(x))
        .collect::<Result<Vec<_>>>()?;
    Ok((outputs, predicted))
}
