use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cebab_core::corpus::TaskGranularity;
use cebab_core::experiment::{
    describe_artifact, render_table, run_ate, run_evaluate, run_stats, run_synth_check, run_train, CorpusSpec,
    EvalReport, ExperimentConfig, ExplainerKind, ExplainerSpec, TableStyle,
};
use cebab_core::metrics::DistanceMetric;
use cebab_core::synthgen::SynthCheckConfig;
use cebab_core::Error;

/// Evaluate concept-based explanation methods against counterfactual edits.
#[derive(Parser, Debug)]
#[command(name = "cebab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label statistics of a corpus.
    Stats(CorpusArgs),
    /// Label-only treatment effects of every concept edit.
    Ate(CorpusArgs),
    /// Train the explained model and aspect classifiers for each seed.
    Train(ExperimentArgs),
    /// Fit all explainers and score them on the evaluation pairs.
    Evaluate(ExperimentArgs),
    /// Compare estimators against exact effects of a synthetic process.
    SynthCheck(SynthArgs),
    /// Render a JSON report as a plain-text table.
    ExportTable(ExportArgs),
    /// Print a summary of a binary artifact.
    DumpArtifact {
        path: PathBuf,
    },
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Experiment config to take the corpus from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CEBaB directory or JSONL file; overrides the config.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_granularity)]
    granularity: Option<TaskGranularity>,
    #[arg(long, default_value = "cebab-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_granularity)]
    granularity: Option<TaskGranularity>,
    /// Comma list (`0,1,2`) or half-open range (`0..5`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list of cosine, l2, normdiff.
    #[arg(long)]
    metric: Option<String>,
    /// Comma list of explainer names; options come from the config entry of
    /// the same name when present.
    #[arg(long)]
    explainers: Option<String>,
    /// Ignore and overwrite cached heads.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON synthetic-check config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "cebab-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// `report.json` written by `evaluate`.
    report: PathBuf,
    /// `pooled` (one column per concept) or `cells` (per direction).
    #[arg(long, default_value = "pooled")]
    style: String,
    #[arg(long)]
    metric: Option<String>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn parse_granularity(s: &str) -> std::result::Result<TaskGranularity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!(Error::Config(format!("empty seed range `{s}`")));
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed `{x}`")))
        .collect()
}

fn parse_list<T>(s: &str, parse: impl Fn(&str) -> cebab_core::Result<T>) -> Result<Vec<T>> {
    Ok(s.split(',').map(|x| parse(x.trim())).collect::<cebab_core::Result<_>>()?)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    })
}

fn corpus_from(config: &ExperimentConfig, path: Option<&PathBuf>) -> CorpusSpec {
    match (path, &config.corpus) {
        (Some(p), CorpusSpec::Path { schema, .. }) => CorpusSpec::Path {
            path: Some(p.clone()),
            schema: schema.clone(),
        },
        (Some(p), _) => CorpusSpec::Path {
            path: Some(p.clone()),
            schema: None,
        },
        (None, c) => c.clone(),
    }
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config = load_config(args.config.as_deref())?;
    config.corpus = corpus_from(&config, args.corpus.as_ref());
    if let Some(g) = args.granularity {
        config.granularity = g;
    }
    if let Some(s) = &args.seeds {
        config.seeds = parse_seeds(s)?;
    }
    if let Some(o) = &args.out {
        config.output_dir = o.clone();
    }
    if let Some(m) = &args.metric {
        config.metrics = parse_list(m, |x| x.parse::<DistanceMetric>())?;
    }
    if let Some(e) = &args.explainers {
        let kinds = parse_list(e, |x| x.parse::<ExplainerKind>())?;
        config.explainers = kinds
            .into_iter()
            .map(|k| {
                config
                    .explainers
                    .iter()
                    .find(|s| s.kind == k)
                    .cloned()
                    .unwrap_or_else(|| ExplainerSpec::from(k))
            })
            .collect();
    }
    if args.no_cache {
        config.cache = false;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Stats(a) => {
            let config = load_config(a.config.as_deref())?;
            let (text, _) = run_stats(&corpus_from(&config, a.corpus.as_ref()), &a.out)?;
            emit(&format!("{text}wrote {}\n", a.out.display()))?;
        }
        Command::Ate(a) => {
            let config = load_config(a.config.as_deref())?;
            let g = a.granularity.unwrap_or(config.granularity);
            let (table, _) = run_ate(&corpus_from(&config, a.corpus.as_ref()), g, &a.out)?;
            emit(&format!("{}wrote {}\n", table.to_text(), a.out.display()))?;
        }
        Command::Train(a) => {
            let config = experiment_config(&a)?;
            let (summary, manifest) = run_train(&config)?;
            for n in &manifest.notices {
                eprintln!("notice: {n}");
            }
            let mut text = String::new();
            for s in &summary.seeds {
                text += &format!(
                    "seed {}: train acc {:.3}, eval acc {:.3}, eval macro-F1 {:.3}\n",
                    s.seed, s.train_accuracy, s.eval_accuracy, s.eval_macro_f1
                );
            }
            emit(&format!("{text}wrote {}\n", config.output_dir.display()))?;
        }
        Command::Evaluate(a) => {
            let config = experiment_config(&a)?;
            let outcome = run_evaluate(&config)?;
            for n in &outcome.manifest.notices {
                eprintln!("notice: {n}");
            }
            let table = render_table(&outcome.report, TableStyle::Pooled);
            emit(&format!("{table}wrote {}\n", outcome.out_dir.display()))?;
        }
        Command::SynthCheck(a) => {
            let mut config: SynthCheckConfig = match &a.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("synth-check config: {e}")))?
                }
                None => SynthCheckConfig::default(),
            };
            if let Some(s) = &a.seeds {
                config.seeds = parse_seeds(s)?;
            }
            let (report, _) = run_synth_check(&config, &a.out)?;
            emit(&report.to_text())?;
            if !report.passed() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::ExportTable(a) => {
            let text = std::fs::read_to_string(&a.report).map_err(|e| Error::Io {
                path: a.report.clone(),
                source: e,
            })?;
            let mut report = EvalReport::from_json(&text)?;
            if let Some(m) = &a.metric {
                let keep: Vec<String> = parse_list(m, |x| x.parse::<DistanceMetric>())?
                    .iter()
                    .map(|d| d.as_str().to_string())
                    .collect();
                report.rows.retain(|r| keep.contains(&r.metric) || r.metric.parse::<DistanceMetric>().is_err());
            }
            let table = render_table(&report, a.style.parse::<TableStyle>()?);
            match &a.out {
                Some(p) => std::fs::write(p, table).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?,
                None => emit(&table)?,
            }
        }
        Command::DumpArtifact { path } => {
            let bytes = std::fs::read(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let v = describe_artifact(&bytes)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&v)?))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_data() => 2,
        Some(e) if e.is_numerical() => 3,
        Some(Error::Undefined(_)) => 3,
        Some(_) => 1,
        None if err.downcast_ref::<std::num::ParseIntError>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
