//! Declarative experiments: config, model caching, the evaluation pipeline,
//! reports and the command drivers behind the `cebab` binary.

mod cache;
mod config;
mod pipeline;
mod report;
mod run;

pub use cache::{key_hash, sha256_hex, ArtifactCache, CacheStatus, RunManifest};
pub use config::{
    ConceptShapOptions, CorpusSpec, ExperimentConfig, ExplainerKind, ExplainerOptions, ExplainerSpec, FeaturizerSpec,
    ModelSpec, SlearnerOptions, TcavOptions, CORPUS_ENV, DOWNLOAD_HINT,
};
pub use pipeline::{
    corpus_outputs, eval_pairs, fit_explainer, load_corpus_spec, model_diagnostics, run_explainer, train_models,
    Coverage, EvalPairs, ExplainerDiagnostics, ExplainerRun, FitContext, FittedExplainer, ModelDiagnostics,
    SeedModels, Workspace,
};
pub use report::{
    aggregate, diagnostic_series, explainer_cells, model_cells, render_table, EvalCell, EvalReport, ExplainerSummary,
    SeedCells, TableStyle, CSV_COLUMNS, MODEL_ROWS, POOLED, UNORDERED,
};
pub use run::{
    describe_artifact, run_ate, run_evaluate, run_stats, run_synth_check, run_train, AteRow, AteTable, EvalOutcome,
    TrainSummary,
};
