//! Python bindings. Structured results cross the boundary as JSON strings,
//! so callers `json.loads` them.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use cebab_core::corpus::{self, AspectName, ConceptValue, SchemaMap, SplitFilter, TaskGranularity};
use cebab_core::experiment::{self, CorpusSpec, ExperimentConfig};
use cebab_core::explainers::RandomExplainer as CoreRandom;
use cebab_core::features::{self, FeatureMatrix, HashingConfig};
use cebab_core::metrics::{self, DistanceMetric};
use cebab_core::model::{self, Architecture, ClassifierHead as CoreHead, TrainConfig};
use cebab_core::rng::substream;
use cebab_core::synthgen::SynthCheckConfig;
use cebab_core::Error;

fn py_err(e: Error) -> PyErr {
    if e.is_data() {
        PyIOError::new_err(e.to_string())
    } else if e.is_numerical() || matches!(e, Error::Undefined(_)) {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    let dim = rows.first().map_or(0, Vec::len);
    FeatureMatrix::from_rows(dim, rows).map_err(py_err)
}

/// A loaded CEBaB corpus.
#[pyclass(frozen)]
struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    /// Loads a release directory or JSONL file; `schema` is an optional
    /// JSON field-map path.
    #[staticmethod]
    #[pyo3(signature = (path, schema=None))]
    fn load(path: PathBuf, schema: Option<PathBuf>) -> PyResult<Self> {
        let schema = match schema {
            Some(p) => SchemaMap::from_json_file(&p).map_err(py_err)?,
            None => SchemaMap::default(),
        };
        Ok(Corpus {
            inner: corpus::load_corpus(&path, &schema).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn originals(&self) -> usize {
        self.inner.originals().count()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn texts(&self) -> Vec<String> {
        self.inner.reviews().iter().map(|r| r.text.clone()).collect()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.reviews().iter().map(|r| r.id.clone()).collect()
    }

    /// Dataset statistics as JSON.
    fn stats(&self) -> String {
        to_json(&corpus::dataset_stats(&self.inner))
    }

    fn stats_text(&self) -> String {
        corpus::dataset_stats(&self.inner).to_text()
    }

    /// Edit pairs as `(base, edit, concept, from, to)` corpus indices and names.
    #[pyo3(signature = (split="all"))]
    fn edit_pairs(&self, split: &str) -> PyResult<Vec<(usize, usize, String, String, String)>> {
        let filter: SplitFilter = parse(split)?;
        Ok(corpus::build_edit_pairs(&self.inner, filter)
            .into_iter()
            .map(|p| {
                (
                    p.base,
                    p.edit,
                    p.concept.as_str().to_string(),
                    p.from_value.as_str().to_string(),
                    p.to_value.as_str().to_string(),
                )
            })
            .collect())
    }

    /// Label-only ATE of one cell over pairs from every split, or None.
    fn ate(&self, granularity: &str, concept: &str, from_value: &str, to_value: &str) -> PyResult<Option<f64>> {
        let g: TaskGranularity = parse(granularity)?;
        let c: AspectName = parse(concept)?;
        let (f, t): (ConceptValue, ConceptValue) = (parse(from_value)?, parse(to_value)?);
        let pairs = corpus::build_edit_pairs(&self.inner, SplitFilter::All);
        Ok(corpus::compute_ate(&self.inner, &pairs, g, c, f, t).map(|e| e.mean))
    }

    /// The full twelve-cell ATE table as JSON.
    fn ate_table(&self, granularity: &str) -> PyResult<String> {
        let g: TaskGranularity = parse(granularity)?;
        Ok(to_json(&experiment::AteTable::compute(&self.inner, g, SplitFilter::All)))
    }
}

/// Signed n-gram hashing featurizer.
#[pyclass(frozen)]
struct HashingFeaturizer {
    config: HashingConfig,
}

#[pymethods]
impl HashingFeaturizer {
    #[new]
    #[pyo3(signature = (dim=1024, ngram_max=2, seed=0))]
    fn new(dim: usize, ngram_max: usize, seed: u64) -> PyResult<Self> {
        let config = HashingConfig { ngram_max, dim, seed };
        config.validate().map_err(py_err)?;
        Ok(HashingFeaturizer { config })
    }

    fn featurize(&self, text: &str) -> PyResult<Vec<f64>> {
        features::featurize_hashed(text, &self.config).map_err(py_err)
    }
}

/// Linear or one-hidden-layer softmax classifier.
#[pyclass]
struct ClassifierHead {
    inner: CoreHead,
}

fn architecture(hidden: Option<usize>) -> Architecture {
    match hidden {
        None | Some(0) => Architecture::Linear,
        Some(h) => Architecture::Mlp { hidden: h },
    }
}

#[pymethods]
impl ClassifierHead {
    /// Glorot-initialized head; `hidden=None` gives a linear head.
    #[new]
    #[pyo3(signature = (input_dim, classes, hidden=None, seed=0))]
    fn new(input_dim: usize, classes: usize, hidden: Option<usize>, seed: u64) -> Self {
        let mut rng = substream(seed, "head_init");
        ClassifierHead {
            inner: CoreHead::init(architecture(hidden), input_dim, classes, &mut rng),
        }
    }

    /// Trains a fresh head with Adam and returns it with its loss history.
    #[staticmethod]
    #[pyo3(signature = (features, labels, classes, hidden=None, learning_rate=1e-3, epochs=50, batch_size=256, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: usize,
        hidden: Option<usize>,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let cfg = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            seed,
            ..TrainConfig::default()
        };
        let x = matrix(features)?;
        let (head, report) =
            model::train_head(&x, &labels, classes, architecture(hidden), &cfg).map_err(py_err)?;
        Ok((ClassifierHead { inner: head }, report.loss_history))
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_proba(&x).map_err(py_err)
    }

    fn predict_logits(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_logits(&x).map_err(py_err)
    }

    fn predict_class(&self, x: Vec<f64>) -> PyResult<usize> {
        self.inner.predict_class(&x).map_err(py_err)
    }

    fn grad_logit(&self, x: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
        self.inner.grad_logit_wrt_input(&x, k).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model::save_head(&path, &self.inner, None).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = model::load_head(&path).map_err(py_err)?;
        Ok(ClassifierHead { inner })
    }
}

/// Difference of two uniform-Dirichlet draws per call index.
#[pyclass(frozen)]
struct RandomExplainer {
    inner: CoreRandom,
}

#[pymethods]
impl RandomExplainer {
    #[new]
    fn new(seed: u64, classes: usize) -> PyResult<Self> {
        Ok(RandomExplainer {
            inner: CoreRandom::new(seed, classes).map_err(py_err)?,
        })
    }

    fn draw(&self, index: u64) -> Vec<f64> {
        self.inner.draw(index).values
    }
}

/// `cosine`, `l2` or `normdiff` distance between two effect vectors.
#[pyfunction]
fn distance(metric: &str, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("effect vectors differ in length"));
    }
    Ok(metrics::distance(parse::<DistanceMetric>(metric)?, &a, &b))
}

/// `(mean, std)` with std None below two values.
#[pyfunction]
fn aggregate_seeds(values: Vec<f64>) -> PyResult<(f64, Option<f64>)> {
    metrics::aggregate_seeds(&values)
        .map(|a| (a.mean, a.std))
        .ok_or_else(|| PyValueError::new_err("no values to aggregate"))
}

/// Runs a full evaluation from a JSON experiment config; returns the report
/// JSON. Outputs are also written to the config's output directory.
#[pyfunction]
fn evaluate(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let outcome = py.detach(|| experiment::run_evaluate(&config)).map_err(py_err)?;
    Ok(outcome.report.to_json())
}

/// Renders a report JSON as a text table (`pooled` or `cells`).
#[pyfunction]
#[pyo3(signature = (report_json, style="pooled"))]
fn render_table(report_json: &str, style: &str) -> PyResult<String> {
    let report = experiment::EvalReport::from_json(report_json).map_err(py_err)?;
    Ok(experiment::render_table(&report, parse(style)?))
}

/// Runs the synthetic oracle checks; returns `(passed, text, report_json)`.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn synth_check(py: Python<'_>, config_json: Option<&str>) -> PyResult<(bool, String, String)> {
    let config: SynthCheckConfig = match config_json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => SynthCheckConfig::default(),
    };
    let report = py.detach(|| cebab_core::synthgen::run_synthcheck(&config)).map_err(py_err)?;
    Ok((report.passed(), report.to_text(), to_json(&report)))
}

/// Label-only ATE table of a corpus path as JSON.
#[pyfunction]
#[pyo3(signature = (path, granularity="5way"))]
fn ate_table(path: PathBuf, granularity: &str) -> PyResult<String> {
    let spec = CorpusSpec::Path { path: Some(path), schema: None };
    let (corpus, _) = experiment::load_corpus_spec(&spec, TaskGranularity::FiveWay).map_err(py_err)?;
    Ok(to_json(&experiment::AteTable::compute(&corpus, parse(granularity)?, SplitFilter::All)))
}

/// JSON summary of a binary artifact file.
#[pyfunction]
fn describe_artifact(path: PathBuf) -> PyResult<String> {
    let bytes = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    Ok(to_json(&experiment::describe_artifact(&bytes).map_err(py_err)?))
}

/// Writes a CEBE embedding file and its manifest; returns the payload sha256.
#[pyfunction]
#[pyo3(signature = (path, ids, vectors, provenance="python"))]
fn write_embeddings(path: PathBuf, ids: Vec<String>, vectors: Vec<Vec<f32>>, provenance: &str) -> PyResult<String> {
    if ids.len() != vectors.len() {
        return Err(PyValueError::new_err("ids and vectors differ in length"));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    let mut table = features::EmbeddingTable::new(dim, provenance);
    for (id, v) in ids.into_iter().zip(&vectors) {
        table.push(id, v).map_err(py_err)?;
    }
    Ok(features::write_embedding_table(&table, &path).map_err(py_err)?.sha256)
}

/// Loads a CEBE file into `(ids, vectors)`.
#[pyfunction]
fn load_embeddings(path: PathBuf) -> PyResult<(Vec<String>, Vec<Vec<f32>>)> {
    let table = features::load_embedding_table(&path).map_err(py_err)?;
    let ids = table.ids().to_vec();
    let vectors = ids.iter().map(|id| table.get(id).expect("listed id").to_vec()).collect();
    Ok((ids, vectors))
}

#[pymodule]
fn cebab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Corpus>()?;
    m.add_class::<HashingFeaturizer>()?;
    m.add_class::<ClassifierHead>()?;
    m.add_class::<RandomExplainer>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_seeds, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(render_table, m)?)?;
    m.add_function(wrap_pyfunction!(synth_check, m)?)?;
    m.add_function(wrap_pyfunction!(ate_table, m)?)?;
    m.add_function(wrap_pyfunction!(describe_artifact, m)?)?;
    m.add_function(wrap_pyfunction!(write_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(load_embeddings, m)?)?;
    Ok(())
}
