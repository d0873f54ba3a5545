use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{ArtifactCache, RunManifest};
use super::config::{CorpusSpec, ExperimentConfig, ExplainerOptions};
use super::pipeline::{
    corpus_outputs, eval_pairs, fit_explainer, load_corpus_spec, model_diagnostics, run_explainer, train_models,
    ExplainerRun, FitContext, ModelDiagnostics, SeedModels, Workspace,
};
use super::report::{aggregate, explainer_cells, model_cells, render_table, summaries, EvalReport, SeedCells, TableStyle};
use crate::corpus::{ate_table_cells, build_edit_pairs, compute_ate, dataset_stats, AteEstimate, Corpus, SplitFilter, TaskGranularity};
use crate::explainers::{ConceptDirection, InlpProjection, CAV_MAGIC, PROJECTION_MAGIC};
use crate::features::{EmbeddingTable, MAGIC as EMBEDDING_MAGIC};
use crate::model::{head_from_bytes, head_to_bytes, AspectClassifierSet, ASPECT_SET_MAGIC, HEAD_MAGIC};
use crate::synthgen::{run_synthcheck, SynthCheckConfig, SynthCheckReport};
use crate::{Error, Result};

fn snapshot<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

fn finish(mut manifest: RunManifest, out: &Path, start: Instant) -> Result<RunManifest> {
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.save(out)?;
    Ok(manifest)
}

/// Result of `evaluate`: the report and where it was written.
#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

struct SeedOutcome {
    models: SeedModels,
    diagnostics: ModelDiagnostics,
    runs: Vec<ExplainerRun>,
    cells: SeedCells,
    artifacts: Vec<(String, Vec<u8>)>,
}

fn evaluate_seed(
    config: &ExperimentConfig,
    ws: &Workspace,
    cache: &ArtifactCache,
    options: &[ExplainerOptions],
    seed: u64,
) -> Result<SeedOutcome> {
    let models = train_models(config, ws, cache, seed)?;
    let diagnostics = model_diagnostics(config, ws, &models)?;
    let (outputs, predicted) = corpus_outputs(ws, &models)?;
    let eval = eval_pairs(ws, config.eval_split, &outputs);
    let ctx = FitContext {
        config,
        ws,
        models: &models,
        outputs: &outputs,
        predicted: &predicted,
    };
    let fitted: Vec<(Vec<(String, Vec<u8>)>, ExplainerRun)> = options
        .par_iter()
        .map(|opt| {
            let mut f = fit_explainer(&ctx, opt)?;
            let artifacts = std::mem::take(&mut f.artifacts);
            let run = run_explainer(ws, &eval, &outputs, &predicted, f)?;
            Ok((artifacts, run))
        })
        .collect::<Result<_>>()?;

    let mut cells = SeedCells::default();
    model_cells(&eval, config.granularity, &mut cells);
    let mut artifacts = vec![
        (
            "model.cebh".to_string(),
            head_to_bytes(&models.model, Some(&config.model.train.clone().with_seed(seed)))?,
        ),
        ("aspects.ceba".to_string(), models.aspects.to_bytes()?),
    ];
    let mut runs = Vec::with_capacity(fitted.len());
    for (files, run) in fitted {
        explainer_cells(&eval, &run, &config.metrics, &mut cells);
        artifacts.extend(files.into_iter().map(|(name, b)| (format!("{}/{name}", run.name), b)));
        runs.push(run);
    }
    Ok(SeedOutcome {
        models,
        diagnostics,
        runs,
        cells,
        artifacts,
    })
}

/// Fits every model and explainer for each seed, scores them on the
/// evaluation pairs and writes `report.csv`, `report.json`, `report.txt`,
/// per-seed artifacts and `manifest.json` under the output directory.
pub fn run_evaluate(config: &ExperimentConfig) -> Result<EvalOutcome> {
    config.validate()?;
    let start = Instant::now();
    let ws = Workspace::load(config)?;
    let out = config.output_dir.clone();
    let cache = if config.cache {
        ArtifactCache::new(out.join("cache"))
    } else {
        ArtifactCache::disabled()
    };
    let options: Vec<ExplainerOptions> = config.explainers.iter().map(|e| e.typed()).collect::<Result<_>>()?;
    let per_seed: Vec<SeedOutcome> = config
        .seeds
        .par_iter()
        .map(|s| evaluate_seed(config, &ws, &cache, &options, *s))
        .collect::<Result<_>>()?;

    let model = config.model_label();
    let cells: Vec<SeedCells> = per_seed.iter().map(|s| s.cells.clone()).collect();
    let rows = aggregate(&model, config.granularity, &cells)?;
    let runs: Vec<&[ExplainerRun]> = per_seed.iter().map(|s| s.runs.as_slice()).collect();
    let report = EvalReport {
        model,
        granularity: config.granularity,
        seeds: config.seeds.clone(),
        eval_split: config.eval_split,
        corpus_hash: ws.corpus_hash.clone(),
        featurizer: ws.featurizer.clone(),
        n_pairs: build_edit_pairs(&ws.corpus, config.eval_split).len(),
        models: per_seed.iter().map(|s| s.diagnostics.clone()).collect(),
        explainers: summaries(&runs),
        rows,
    };

    let mut manifest = RunManifest::new("evaluate", snapshot(config));
    manifest.corpus_hash = Some(ws.corpus_hash.clone());
    manifest.featurizer = Some(ws.featurizer.clone());
    for s in &per_seed {
        for (k, v) in &s.models.cache {
            manifest.cache.insert(k.clone(), *v);
        }
        for (name, bytes) in &s.artifacts {
            manifest.write(&out, &format!("artifacts/seed{}/{name}", s.models.seed), bytes)?;
        }
    }
    manifest.notices = cache.notices();
    manifest.write(&out, "report.csv", report.to_csv()?.as_bytes())?;
    manifest.write(&out, "report.json", report.to_json().as_bytes())?;
    let text = format!(
        "{}{}",
        render_table(&report, TableStyle::Pooled),
        render_table(&report, TableStyle::Cells)
    );
    manifest.write(&out, "report.txt", text.as_bytes())?;
    let manifest = finish(manifest, &out, start)?;
    Ok(EvalOutcome {
        report,
        manifest,
        out_dir: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub granularity: TaskGranularity,
    pub corpus_hash: String,
    pub seeds: Vec<ModelDiagnostics>,
}

/// Trains (or loads from the cache) the model and aspect classifiers of
/// every seed and persists them under `artifacts/seed<k>/`.
pub fn run_train(config: &ExperimentConfig) -> Result<(TrainSummary, RunManifest)> {
    config.validate()?;
    let start = Instant::now();
    let ws = Workspace::load(config)?;
    let out = config.output_dir.clone();
    let cache = if config.cache {
        ArtifactCache::new(out.join("cache"))
    } else {
        ArtifactCache::disabled()
    };
    let trained: Vec<(SeedModels, ModelDiagnostics)> = config
        .seeds
        .par_iter()
        .map(|s| {
            let m = train_models(config, &ws, &cache, *s)?;
            let d = model_diagnostics(config, &ws, &m)?;
            Ok((m, d))
        })
        .collect::<Result<_>>()?;
    let mut manifest = RunManifest::new("train", snapshot(config));
    manifest.corpus_hash = Some(ws.corpus_hash.clone());
    manifest.featurizer = Some(ws.featurizer.clone());
    for (m, _) in &trained {
        let cfg = config.model.train.clone().with_seed(m.seed);
        manifest.write(&out, &format!("artifacts/seed{}/model.cebh", m.seed), &head_to_bytes(&m.model, Some(&cfg))?)?;
        manifest.write(&out, &format!("artifacts/seed{}/aspects.ceba", m.seed), &m.aspects.to_bytes()?)?;
        for (k, v) in &m.cache {
            manifest.cache.insert(k.clone(), *v);
        }
    }
    let summary = TrainSummary {
        model: config.model_label(),
        granularity: config.granularity,
        corpus_hash: ws.corpus_hash.clone(),
        seeds: trained.into_iter().map(|(_, d)| d).collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    manifest.write(&out, "train.json", text.as_bytes())?;
    manifest.notices = cache.notices();
    let manifest = finish(manifest, &out, start)?;
    Ok((summary, manifest))
}

fn load_for_labels(spec: &CorpusSpec) -> Result<Corpus> {
    load_corpus_spec(spec, TaskGranularity::FiveWay).map(|(c, _)| c)
}

/// Writes `stats.csv` and `stats.txt` for the corpus.
pub fn run_stats(corpus: &CorpusSpec, out: &Path) -> Result<(String, RunManifest)> {
    let start = Instant::now();
    let spec = snapshot(corpus);
    let corpus = load_for_labels(corpus)?;
    let stats = dataset_stats(&corpus);
    let mut manifest = RunManifest::new("stats", serde_json::json!({ "corpus": spec, "texts": corpus.len() }));
    manifest.corpus_hash = Some(corpus.content_hash());
    manifest.write(out, "stats.csv", stats.to_csv().as_bytes())?;
    let text = stats.to_text();
    manifest.write(out, "stats.txt", text.as_bytes())?;
    Ok((text, finish(manifest, out, start)?))
}

/// One cell of the label-only treatment-effect table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteRow {
    pub concept: String,
    pub from: String,
    pub to: String,
    pub estimate: Option<AteEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteTable {
    pub granularity: TaskGranularity,
    pub split: SplitFilter,
    pub rows: Vec<AteRow>,
}

impl AteTable {
    pub fn compute(corpus: &Corpus, granularity: TaskGranularity, split: SplitFilter) -> Self {
        let pairs = build_edit_pairs(corpus, split);
        let rows = ate_table_cells()
            .into_iter()
            .map(|(c, f, t)| AteRow {
                concept: c.as_str().into(),
                from: f.as_str().into(),
                to: t.as_str().into(),
                estimate: compute_ate(corpus, &pairs, granularity, c, f, t),
            })
            .collect();
        AteTable { granularity, split, rows }
    }

    pub fn get(&self, concept: &str, from: &str, to: &str) -> Option<AteEstimate> {
        self.rows
            .iter()
            .find(|r| r.concept == concept && r.from == from && r.to == to)
            .and_then(|r| r.estimate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("granularity,concept,from,to,ate,std_err,n_pairs\n");
        for r in &self.rows {
            let (m, se, n) = match r.estimate {
                Some(e) => (format!("{}", e.mean), e.std_err.map_or_else(String::new, |v| format!("{v}")), e.n_pairs),
                None => (String::new(), String::new(), 0),
            };
            let _ = writeln!(s, "{},{},{},{},{m},{se},{n}", self.granularity, r.concept, r.from, r.to);
        }
        s
    }

    /// One line per concept with the three directions of the printed tables.
    pub fn to_text(&self) -> String {
        let mut s = format!("ATE ({}), {:?} pairs\n", self.granularity, self.split);
        let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "concept", "Neg>Pos", "Neg>Unk", "Pos>Unk");
        for chunk in self.rows.chunks(3) {
            let _ = write!(s, "{:<10}", chunk[0].concept);
            for r in chunk {
                let v = r.estimate.map_or_else(|| "-".to_string(), |e| format!("{:.2}", e.mean));
                let _ = write!(s, "{v:>10}");
            }
            s.push('\n');
        }
        s
    }
}

/// Writes `ate.csv` and `ate.txt`; pairs are taken from every split.
pub fn run_ate(corpus: &CorpusSpec, granularity: TaskGranularity, out: &Path) -> Result<(AteTable, RunManifest)> {
    let start = Instant::now();
    let spec = snapshot(corpus);
    let corpus = load_for_labels(corpus)?;
    let table = AteTable::compute(&corpus, granularity, SplitFilter::All);
    let mut manifest = RunManifest::new("ate", serde_json::json!({ "corpus": spec, "granularity": granularity }));
    manifest.corpus_hash = Some(corpus.content_hash());
    manifest.write(out, "ate.csv", table.to_csv().as_bytes())?;
    manifest.write(out, "ate.txt", table.to_text().as_bytes())?;
    Ok((table, finish(manifest, out, start)?))
}

/// Runs the synthetic oracle checks and writes `synthcheck.json` and
/// `synthcheck.txt`.
pub fn run_synth_check(config: &SynthCheckConfig, out: &Path) -> Result<(SynthCheckReport, RunManifest)> {
    let start = Instant::now();
    let report = run_synthcheck(config)?;
    let mut manifest = RunManifest::new("synth-check", snapshot(config));
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    manifest.write(out, "synthcheck.json", json.as_bytes())?;
    manifest.write(out, "synthcheck.txt", report.to_text().as_bytes())?;
    Ok((report, finish(manifest, out, start)?))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Human-readable summary of a binary artifact, chosen by its magic bytes.
pub fn describe_artifact(bytes: &[u8]) -> Result<serde_json::Value> {
    use serde_json::json;
    let magic: &[u8] = bytes.get(..4).ok_or(Error::Format {
        offset: 0,
        message: "file shorter than a magic tag".into(),
    })?;
    if magic == HEAD_MAGIC {
        let (head, cfg) = head_from_bytes(bytes)?;
        return Ok(json!({
            "kind": "classifier_head",
            "architecture": head.architecture(),
            "input_dim": head.input_dim(),
            "classes": head.classes(),
            "parameters": head.params().len(),
            "parameter_norm": norm(head.params()),
            "train_config": cfg,
        }));
    }
    if magic == ASPECT_SET_MAGIC {
        let set = AspectClassifierSet::from_bytes(bytes)?;
        let heads: Vec<_> = crate::corpus::AspectName::ALL
            .iter()
            .map(|a| {
                let h = set.head(*a);
                json!({ "aspect": a, "architecture": h.architecture(), "input_dim": h.input_dim(), "parameter_norm": norm(h.params()) })
            })
            .collect();
        return Ok(json!({ "kind": "aspect_classifier_set", "heads": heads }));
    }
    if magic == CAV_MAGIC {
        let c = ConceptDirection::from_bytes(bytes)?;
        let mut order: Vec<usize> = (0..c.weights.len()).collect();
        order.sort_by(|a, b| c.weights[*b].abs().total_cmp(&c.weights[*a].abs()).then(a.cmp(b)));
        let top: Vec<_> = order.iter().take(10).map(|i| json!([i, c.weights[*i]])).collect();
        return Ok(json!({
            "kind": "concept_direction",
            "aspect": c.aspect,
            "dim": c.weights.len(),
            "bias": c.bias,
            "heldout_accuracy": c.heldout_accuracy,
            "epochs": c.epochs,
            "largest_weights": top,
        }));
    }
    if magic == PROJECTION_MAGIC {
        let p = InlpProjection::from_bytes(bytes)?;
        return Ok(json!({
            "kind": "nullspace_projection",
            "aspect": p.aspect,
            "dim": p.dim,
            "rank": p.rank(),
            "rank_removed": p.basis().len(),
            "iterations": p.iterations,
            "probe_accuracy": p.probe_accuracy,
            "majority_baseline": p.majority_baseline,
        }));
    }
    if magic == EMBEDDING_MAGIC {
        let t = EmbeddingTable::from_bytes(bytes, "")?;
        let m = t.manifest();
        return Ok(json!({
            "kind": "embedding_table",
            "dim": m.dim,
            "count": m.count,
            "sha256": m.sha256,
            "first_ids": t.ids().iter().take(5).collect::<Vec<_>>(),
        }));
    }
    Err(Error::Format {
        offset: 0,
        message: format!("unknown artifact magic {:?}", String::from_utf8_lossy(magic)),
    })
}
