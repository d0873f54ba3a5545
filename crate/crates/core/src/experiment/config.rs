use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{SplitFilter, TaskGranularity};
use crate::explainers::{ApproxConfig, CausalmConfig, EtaConfig, InlpConfig, SvmConfig};
use crate::features::HashingConfig;
use crate::metrics::DistanceMetric;
use crate::model::{Architecture, TrainConfig};
use crate::synthgen::SyntheticSpec;
use crate::{Error, Result};

/// Environment variable consulted when the config names no corpus path.
pub const CORPUS_ENV: &str = "CEBAB_CORPUS_DIR";

pub const DOWNLOAD_HINT: &str = "download the CEBaB release (https://huggingface.co/datasets/CEBaB/CEBaB) \
     and pass its directory with --corpus or set CEBAB_CORPUS_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSpec {
    /// A CEBaB release directory or canonical JSONL file. With no path the
    /// environment variable is used.
    Path {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        /// Optional JSON field map for non-canonical layouts.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<PathBuf>,
    },
    /// Generated text; the experiment granularity overrides the one in `spec`.
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        #[serde(default = "default_originals")]
        originals: usize,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_originals() -> usize {
    1000
}

fn default_test_fraction() -> f64 {
    0.3
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec::Path { path: None, schema: None }
    }
}

impl CorpusSpec {
    /// Location of a path corpus: config first, then the environment.
    pub fn resolve_path(&self) -> Result<Option<PathBuf>> {
        match self {
            CorpusSpec::Synthetic { .. } => Ok(None),
            CorpusSpec::Path { path: Some(p), .. } => Ok(Some(p.clone())),
            CorpusSpec::Path { path: None, .. } => match std::env::var_os(CORPUS_ENV) {
                Some(p) if !p.is_empty() => Ok(Some(PathBuf::from(p))),
                _ => Err(Error::CorpusMissing(format!("no corpus path configured; {DOWNLOAD_HINT}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeaturizerSpec {
    Hashed {
        #[serde(default = "default_ngram_max")]
        ngram_max: usize,
        #[serde(default = "default_hashed_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// A CEBE embedding file with its manifest next to it.
    Embeddings { path: PathBuf },
    /// The emission vectors of a synthetic corpus.
    Native,
}

fn default_ngram_max() -> usize {
    2
}

fn default_hashed_dim() -> usize {
    1024
}

impl Default for FeaturizerSpec {
    fn default() -> Self {
        FeaturizerSpec::Hashed {
            ngram_max: default_ngram_max(),
            dim: default_hashed_dim(),
            seed: 0,
        }
    }
}

impl FeaturizerSpec {
    pub fn hashing(&self) -> Option<HashingConfig> {
        match self {
            FeaturizerSpec::Hashed { ngram_max, dim, seed } => Some(HashingConfig {
                ngram_max: *ngram_max,
                dim: *dim,
                seed: *seed,
            }),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FeaturizerSpec::Hashed { dim, .. } => format!("hashed{dim}"),
            FeaturizerSpec::Embeddings { .. } => "embeddings".into(),
            FeaturizerSpec::Native => "native".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self.architecture {
            Architecture::Linear => "linear".into(),
            Architecture::Mlp { hidden } => format!("mlp{hidden}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    Oracle,
    Random,
    Approx,
    Conexp,
    Slearner,
    Tcav,
    Conceptshap,
    Inlp,
    Causalm,
}

impl ExplainerKind {
    pub const DEFAULT: [ExplainerKind; 8] = [
        ExplainerKind::Random,
        ExplainerKind::Approx,
        ExplainerKind::Conexp,
        ExplainerKind::Slearner,
        ExplainerKind::Tcav,
        ExplainerKind::Conceptshap,
        ExplainerKind::Inlp,
        ExplainerKind::Causalm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerKind::Oracle => "oracle",
            ExplainerKind::Random => "random",
            ExplainerKind::Approx => "approx",
            ExplainerKind::Conexp => "conexp",
            ExplainerKind::Slearner => "slearner",
            ExplainerKind::Tcav => "tcav",
            ExplainerKind::Conceptshap => "conceptshap",
            ExplainerKind::Inlp => "inlp",
            ExplainerKind::Causalm => "causalm",
        }
    }
}

impl FromStr for ExplainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = serde_json::Value::String(s.trim().to_lowercase().replace('-', "_"));
        serde_json::from_value(v).map_err(|_| Error::Config(format!("unknown explainer `{s}`")))
    }
}

/// One entry of the explainer list. `options` is checked against the
/// explainer's own option type during validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerSpec {
    pub kind: ExplainerKind,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub options: serde_json::Value,
}

impl From<ExplainerKind> for ExplainerSpec {
    fn from(kind: ExplainerKind) -> Self {
        ExplainerSpec {
            kind,
            options: serde_json::Value::Null,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcavOptions {
    /// Report raw directional derivatives instead of their tanh.
    pub raw: bool,
    pub svm: SvmConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConceptShapOptions {
    pub svm: SvmConfig,
    pub eta: EtaConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlearnerOptions {
    pub train: TrainConfig,
}

impl Default for SlearnerOptions {
    fn default() -> Self {
        SlearnerOptions {
            train: TrainConfig {
                learning_rate: 1e-2,
                epochs: 100,
                ..TrainConfig::default()
            },
        }
    }
}

/// Typed options of an explainer entry.
#[derive(Clone, Debug, PartialEq)]
pub enum ExplainerOptions {
    Oracle,
    Random,
    Approx(ApproxConfig),
    Conexp,
    Slearner(SlearnerOptions),
    Tcav(TcavOptions),
    Conceptshap(ConceptShapOptions),
    Inlp(InlpConfig),
    Causalm(CausalmConfig),
}

fn parse_options<T: serde::de::DeserializeOwned + Default>(kind: ExplainerKind, v: &serde_json::Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Config(format!("options of explainer `{}`: {e}", kind.as_str())))
}

fn no_options(kind: ExplainerKind, v: &serde_json::Value) -> Result<()> {
    match v {
        serde_json::Value::Null => Ok(()),
        serde_json::Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(Error::Config(format!("explainer `{}` takes no options", kind.as_str()))),
    }
}

impl ExplainerSpec {
    pub fn typed(&self) -> Result<ExplainerOptions> {
        let (k, v) = (self.kind, &self.options);
        Ok(match k {
            ExplainerKind::Oracle => no_options(k, v).map(|_| ExplainerOptions::Oracle)?,
            ExplainerKind::Random => no_options(k, v).map(|_| ExplainerOptions::Random)?,
            ExplainerKind::Conexp => no_options(k, v).map(|_| ExplainerOptions::Conexp)?,
            ExplainerKind::Approx => ExplainerOptions::Approx(parse_options(k, v)?),
            ExplainerKind::Slearner => ExplainerOptions::Slearner(parse_options(k, v)?),
            ExplainerKind::Tcav => ExplainerOptions::Tcav(parse_options(k, v)?),
            ExplainerKind::Conceptshap => ExplainerOptions::Conceptshap(parse_options(k, v)?),
            ExplainerKind::Inlp => ExplainerOptions::Inlp(parse_options(k, v)?),
            ExplainerKind::Causalm => ExplainerOptions::Causalm(parse_options(k, v)?),
        })
    }
}

fn default_explainers() -> Vec<ExplainerSpec> {
    ExplainerKind::DEFAULT.iter().map(|k| ExplainerSpec::from(*k)).collect()
}

fn default_metrics() -> Vec<DistanceMetric> {
    DistanceMetric::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("cebab-out")
}

fn default_eval_split() -> SplitFilter {
    SplitFilter::Test
}

fn default_granularity() -> TaskGranularity {
    TaskGranularity::FiveWay
}

fn default_true() -> bool {
    true
}

/// A whole experiment. Every field has a default, so `{}` is a valid config
/// once a corpus can be located.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub featurizer: FeaturizerSpec,
    #[serde(default = "default_granularity")]
    pub granularity: TaskGranularity,
    /// The explained model.
    #[serde(default)]
    pub model: ModelSpec,
    /// Aspect classifiers that supply predicted labels at test time.
    #[serde(default)]
    pub aspect_model: ModelSpec,
    #[serde(default = "default_explainers")]
    pub explainers: Vec<ExplainerSpec>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<DistanceMetric>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eval_split")]
    pub eval_split: SplitFilter,
    /// Reuse trained heads from `<output_dir>/cache`.
    #[serde(default = "default_true")]
    pub cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if self.explainers.is_empty() {
            return Err(Error::Config("at least one explainer is required".into()));
        }
        let mut kinds: Vec<ExplainerKind> = self.explainers.iter().map(|e| e.kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        if kinds.len() != self.explainers.len() {
            return Err(Error::Config("each explainer may appear once".into()));
        }
        for e in &self.explainers {
            e.typed()?;
        }
        if let Some(h) = self.featurizer.hashing() {
            h.validate()?;
        }
        match (&self.corpus, &self.featurizer) {
            (CorpusSpec::Path { .. }, FeaturizerSpec::Native) => {
                return Err(Error::Config("the native featurizer needs a synthetic corpus".into()));
            }
            (CorpusSpec::Synthetic { spec, originals, test_fraction, .. }, _) => {
                if spec.concepts != 4 {
                    return Err(Error::Config("synthetic experiment corpora need four concepts".into()));
                }
                if *originals == 0 || !(0.0..1.0).contains(test_fraction) {
                    return Err(Error::Config("synthetic corpus needs originals > 0 and test_fraction in [0, 1)".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn model_label(&self) -> String {
        format!("{}-{}", self.featurizer.label(), self.model.label())
    }
}
