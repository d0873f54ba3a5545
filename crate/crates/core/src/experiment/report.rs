use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pipeline::{EvalPairs, ExplainerDiagnostics, ExplainerRun, ModelDiagnostics};
use crate::corpus::{ordered_directions, unordered_value_pairs, AspectName, ConceptValue, SplitFilter, TaskGranularity};
use crate::explainers::{Applicability, EffectVector};
use crate::metrics::{
    acace, acace_error, aggregate_seeds, cace_error, cace_scalar, compute_cace, distance, icace_error, AcaceCell,
    DistanceMetric,
};
use crate::{Error, Result};

/// `from`/`to` marker of rows pooled over all ordered directions, weighted
/// by pair count.
pub const POOLED: &str = "all";
/// `from`/`to` marker of rows averaging the three unordered cells equally.
pub const UNORDERED: &str = "unordered";
/// Explainer name of rows describing the model itself.
pub const MODEL_ROWS: &str = "model";

pub const CSV_COLUMNS: [&str; 12] = [
    "model",
    "granularity",
    "seed_count",
    "explainer",
    "concept",
    "from",
    "to",
    "metric",
    "mean",
    "std",
    "n_pairs",
    "applicability",
];

/// One report row, aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCell {
    pub model: String,
    pub granularity: TaskGranularity,
    pub seed_count: usize,
    pub explainer: String,
    pub concept: String,
    pub from: String,
    pub to: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_pairs: usize,
    /// Direction support of the explainer, or `not_applicable` / `empty`
    /// when the cell has no value.
    pub applicability: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    explainer: String,
    concept: String,
    from: String,
    to: String,
    metric: String,
}

#[derive(Clone, Debug, PartialEq)]
struct CellValue {
    value: Option<f64>,
    n_pairs: usize,
    status: String,
}

/// Rows of one seed in emission order.
#[derive(Clone, Debug, Default)]
pub struct SeedCells {
    cells: Vec<(CellKey, CellValue)>,
}

impl SeedCells {
    fn push(&mut self, explainer: &str, concept: &str, from: &str, to: &str, metric: &str, v: CellValue) {
        let key = CellKey {
            explainer: explainer.into(),
            concept: concept.into(),
            from: from.into(),
            to: to.into(),
            metric: metric.into(),
        };
        self.cells.push((key, v));
    }
}

fn value_cell(value: Option<f64>, n_pairs: usize, status: &str) -> CellValue {
    CellValue {
        status: if value.is_some() { status.to_string() } else { "empty".into() },
        value,
        n_pairs: if value.is_some() { n_pairs } else { 0 },
    }
}

fn not_applicable() -> CellValue {
    CellValue {
        value: None,
        n_pairs: 0,
        status: "not_applicable".into(),
    }
}

fn cell_indices(eval: &EvalPairs, concept: AspectName, from: ConceptValue, to: ConceptValue) -> Vec<usize> {
    (0..eval.pairs.len())
        .filter(|i| {
            let p = &eval.pairs[*i];
            p.concept == concept && p.from_value == from && p.to_value == to
        })
        .collect()
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|i| items[*i].clone()).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Model-level rows: the scalar CaCE of each direction and the ACaCE of
/// each concept.
pub fn model_cells(eval: &EvalPairs, granularity: TaskGranularity, out: &mut SeedCells) {
    for concept in AspectName::ALL {
        let c = concept.as_str();
        for (from, to) in ordered_directions() {
            let idx = cell_indices(eval, concept, from, to);
            let scalar = cace_scalar(&pick(&eval.predicted_classes, &idx), granularity);
            out.push(MODEL_ROWS, c, from.as_str(), to.as_str(), "cace_scalar", value_cell(scalar, idx.len(), "all"));
        }
        let caces: Vec<Option<EffectVector>> = unordered_value_pairs()
            .iter()
            .map(|(a, b)| compute_cace(&pick(&eval.observed, &cell_indices(eval, concept, *a, *b))))
            .collect();
        let n: usize = unordered_value_pairs()
            .iter()
            .map(|(a, b)| cell_indices(eval, concept, *a, *b).len())
            .sum();
        let v = acace(&caces).map(|m| m.value);
        out.push(MODEL_ROWS, c, UNORDERED, UNORDERED, "acace", value_cell(v, n, "all"));
    }
}

/// Error rows of one explainer for one seed.
pub fn explainer_cells(eval: &EvalPairs, run: &ExplainerRun, metrics: &[DistanceMetric], out: &mut SeedCells) {
    let status = run.applicability.as_str();
    let name = run.name.as_str();
    let with_estimate = |idx: &[usize]| -> Vec<usize> {
        idx.iter().copied().filter(|i| run.estimates[*i].is_some()).collect()
    };
    let est = |idx: &[usize]| -> Vec<EffectVector> { idx.iter().map(|i| run.estimates[*i].clone().unwrap()).collect() };
    for concept in AspectName::ALL {
        let c = concept.as_str();
        let mut pooled: Vec<usize> = Vec::new();
        for (from, to) in ordered_directions() {
            let (f, t) = (from.as_str(), to.as_str());
            if !run.applicability.allows(to) {
                for m in metrics {
                    out.push(name, c, f, t, m.as_str(), not_applicable());
                }
                for m in metrics {
                    out.push(name, c, f, t, &format!("cace_{}", m.as_str()), not_applicable());
                }
                continue;
            }
            let all = cell_indices(eval, concept, from, to);
            let idx = with_estimate(&all);
            pooled.extend(&idx);
            let (obs, guesses) = (pick(&eval.observed, &idx), est(&idx));
            for m in metrics {
                out.push(name, c, f, t, m.as_str(), value_cell(icace_error(*m, &obs, &guesses), idx.len(), status));
            }
            let cace = compute_cace(&pick(&eval.observed, &all));
            for m in metrics {
                let v = cace.as_ref().and_then(|cc| cace_error(*m, cc, &guesses));
                out.push(name, c, f, t, &format!("cace_{}", m.as_str()), value_cell(v, idx.len(), status));
            }
        }
        pooled.sort_unstable();
        let (obs, guesses) = (pick(&eval.observed, &pooled), est(&pooled));
        for m in metrics {
            out.push(name, c, POOLED, POOLED, m.as_str(), value_cell(icace_error(*m, &obs, &guesses), pooled.len(), status));
        }
        for m in metrics {
            let mut per_cell = Vec::new();
            let mut n = 0;
            for (a, b) in unordered_value_pairs() {
                let mut idx = Vec::new();
                for (from, to) in [(a, b), (b, a)] {
                    if run.applicability.allows(to) {
                        idx.extend(with_estimate(&cell_indices(eval, concept, from, to)));
                    }
                }
                let d: Vec<f64> = idx
                    .iter()
                    .map(|i| distance(*m, &eval.observed[*i].values, &run.estimates[*i].as_ref().unwrap().values))
                    .collect();
                if let Some(v) = mean(&d) {
                    per_cell.push(v);
                    n += idx.len();
                }
            }
            out.push(name, c, UNORDERED, UNORDERED, m.as_str(), value_cell(mean(&per_cell), n, status));
        }
        let cells: Vec<(Option<EffectVector>, Vec<EffectVector>, usize)> = unordered_value_pairs()
            .iter()
            .map(|&(a, b)| {
                // Magnitudes are direction-free, so a one-sided method is
                // scored on whichever orientation it supports.
                let (a, b) = if run.applicability.allows(b) || !run.applicability.allows(a) { (a, b) } else { (b, a) };
                let all = cell_indices(eval, concept, a, b);
                let idx = if run.applicability.allows(b) { with_estimate(&all) } else { Vec::new() };
                (compute_cace(&pick(&eval.observed, &all)), est(&idx), idx.len())
            })
            .collect();
        let acells: Vec<AcaceCell<'_>> = cells
            .iter()
            .map(|(cace, e, _)| AcaceCell {
                cace: cace.as_ref(),
                estimates: e,
            })
            .collect();
        let n = cells
            .iter()
            .filter(|(cace, e, _)| cace.is_some() && !e.is_empty())
            .map(|(_, _, n)| n)
            .sum();
        let v = acace_error(&acells).map(|m| m.value);
        out.push(name, c, UNORDERED, UNORDERED, "acace_error", value_cell(v, n, status));
    }
}

/// Explainer metadata in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerSummary {
    pub name: String,
    pub applicability: Applicability,
    pub uses_test_time_labels: bool,
    /// Per seed, in seed order.
    pub diagnostics: Vec<ExplainerDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub model: String,
    pub granularity: TaskGranularity,
    pub seeds: Vec<u64>,
    pub eval_split: SplitFilter,
    pub corpus_hash: String,
    pub featurizer: String,
    pub n_pairs: usize,
    pub models: Vec<ModelDiagnostics>,
    pub explainers: Vec<ExplainerSummary>,
    pub rows: Vec<EvalCell>,
}

/// Reduces per-seed rows into mean and sample std. All seeds must have
/// emitted the same rows in the same order.
pub fn aggregate(model: &str, granularity: TaskGranularity, per_seed: &[SeedCells]) -> Result<Vec<EvalCell>> {
    let first = per_seed.first().ok_or_else(|| Error::contract("no seeds to aggregate"))?;
    if per_seed.iter().any(|s| s.cells.len() != first.cells.len()) {
        return Err(Error::contract("seeds emitted different row sets"));
    }
    let mut rows = Vec::with_capacity(first.cells.len());
    for (pos, (key, _)) in first.cells.iter().enumerate() {
        let column: Vec<&CellValue> = per_seed
            .iter()
            .map(|s| {
                let (k, v) = &s.cells[pos];
                debug_assert_eq!(k, key);
                v
            })
            .collect();
        let values: Vec<f64> = column.iter().filter_map(|v| v.value).collect();
        let agg = aggregate_seeds(&values);
        let defined: Vec<&&CellValue> = column.iter().filter(|v| v.value.is_some()).collect();
        let status = defined
            .first()
            .map_or_else(|| column[0].status.clone(), |v| v.status.clone());
        rows.push(EvalCell {
            model: model.to_string(),
            granularity,
            seed_count: values.len(),
            explainer: key.explainer.clone(),
            concept: key.concept.clone(),
            from: key.from.clone(),
            to: key.to.clone(),
            metric: key.metric.clone(),
            mean: agg.map(|a| a.mean),
            std: agg.and_then(|a| a.std),
            n_pairs: defined.iter().map(|v| v.n_pairs).min().unwrap_or(0),
            applicability: status,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Contract(format!("csv encoding: {e}"));
        w.write_record(CSV_COLUMNS).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.granularity.as_str().to_string(),
                r.seed_count.to_string(),
                r.explainer.clone(),
                r.concept.clone(),
                r.from.clone(),
                r.to.clone(),
                r.metric.clone(),
                opt(r.mean),
                opt(r.std),
                r.n_pairs.to_string(),
                r.applicability.clone(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("evaluation report: {e}"),
        })
    }

    pub fn row(&self, explainer: &str, concept: &str, from: &str, to: &str, metric: &str) -> Option<&EvalCell> {
        self.rows.iter().find(|r| {
            r.explainer == explainer && r.concept == concept && r.from == from && r.to == to && r.metric == metric
        })
    }

    fn explainer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if r.explainer != MODEL_ROWS && !names.contains(&r.explainer) {
                names.push(r.explainer.clone());
            }
        }
        names
    }

    fn metrics(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if DistanceMetric::from_str(&r.metric).is_ok() && !out.contains(&r.metric) {
                out.push(r.metric.clone());
            }
        }
        out
    }
}

/// Layout of the text tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableStyle {
    /// One column per concept, direction-pooled ICaCE-Error.
    Pooled,
    /// One column per concept and ordered direction.
    Cells,
}

impl FromStr for TableStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "pooled" | "figure" => Ok(TableStyle::Pooled),
            "cells" => Ok(TableStyle::Cells),
            other => Err(Error::Config(format!("unknown table style `{other}`"))),
        }
    }
}

fn fmt_cell(cell: Option<&EvalCell>) -> String {
    match cell {
        Some(EvalCell { mean: Some(m), std: Some(s), .. }) => format!("{m:.2} (± {s:.2})"),
        Some(EvalCell { mean: Some(m), .. }) => format!("{m:.2}"),
        Some(c) if c.applicability == "not_applicable" => "n/a".into(),
        _ => "-".into(),
    }
}

fn render_grid(out: &mut String, header: &[String], rows: &[(String, Vec<String>)]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(9);
    for (_, cells) in rows {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.chars().count());
        }
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let _ = write!(out, "{}", pad("explainer", label_w));
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "  {}", pad(h, *w));
    }
    out.push('\n');
    let total = label_w + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "{}", pad(label, label_w));
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {}", pad(c, *w));
        }
        out.push('\n');
    }
}

/// Plain-text tables of ICaCE-Error, one block per metric.
pub fn render_table(report: &EvalReport, style: TableStyle) -> String {
    let mut out = String::new();
    let names = report.explainer_names();
    for metric in report.metrics() {
        let _ = writeln!(
            out,
            "ICaCE-Error ({metric}), {} {}, {} seed(s)",
            report.model,
            report.granularity,
            report.seeds.len()
        );
        let (header, columns): (Vec<String>, Vec<(String, String, String)>) = match style {
            TableStyle::Pooled => AspectName::ALL
                .iter()
                .map(|a| (a.as_str().to_string(), (a.as_str().to_string(), POOLED.into(), POOLED.into())))
                .unzip(),
            TableStyle::Cells => AspectName::ALL
                .iter()
                .flat_map(|a| {
                    ordered_directions().into_iter().map(move |(f, t)| {
                        (
                            format!("{} {}>{}", a.as_str(), f.short(), t.short()),
                            (a.as_str().to_string(), f.as_str().to_string(), t.as_str().to_string()),
                        )
                    })
                })
                .unzip(),
        };
        let rows: Vec<(String, Vec<String>)> = names
            .iter()
            .map(|n| {
                let cells = columns.iter().map(|(c, f, t)| fmt_cell(report.row(n, c, f, t, &metric))).collect();
                (n.clone(), cells)
            })
            .collect();
        render_grid(&mut out, &header, &rows);
        out.push('\n');
    }
    out
}

/// Per-seed fit diagnostics as `name -> seed values`, for quick summaries.
pub fn diagnostic_series(report: &EvalReport, explainer: &str, key: &str) -> Vec<f64> {
    report
        .explainers
        .iter()
        .find(|e| e.name == explainer)
        .map(|e| e.diagnostics.iter().filter_map(|d| d.values.get(key).copied()).collect())
        .unwrap_or_default()
}

pub(crate) fn summaries(runs: &[&[ExplainerRun]]) -> Vec<ExplainerSummary> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(i, r)| ExplainerSummary {
            name: r.name.clone(),
            applicability: r.applicability,
            uses_test_time_labels: r.uses_test_time_labels,
            diagnostics: runs.iter().map(|seed| seed[i].diagnostics.clone()).collect(),
        })
        .collect()
}
