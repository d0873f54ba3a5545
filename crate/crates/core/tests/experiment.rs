mod common;

use std::path::Path;

use cebab_core::experiment::*;
use cebab_core::features::{write_embedding_table, EmbeddingTable};
use cebab_core::synthgen::SyntheticSpec;
use cebab_core::Error;

fn fixture_config(out: &Path, explainers: &[ExplainerKind]) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        corpus: CorpusSpec::Path {
            path: Some(common::fixture_dir()),
            schema: None,
        },
        featurizer: FeaturizerSpec::Hashed {
            ngram_max: 2,
            dim: 128,
            seed: 0,
        },
        explainers: explainers.iter().map(|k| ExplainerSpec::from(*k)).collect(),
        seeds: vec![0, 1],
        output_dir: out.to_path_buf(),
        cache: false,
        ..ExperimentConfig::default()
    };
    c.model.train.epochs = 5;
    c.aspect_model.train.epochs = 5;
    c
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_json(text) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a config error for {text}, got {other:?}"),
    }
}

#[test]
fn config_rejects_unknown_and_invalid_fields() {
    assert!(config_error(r#"{"bogus": 1}"#).contains("bogus"));
    assert!(config_error(r#"{"model": {"train": {"lr": 0.1}}}"#).contains("lr"));
    assert!(config_error(r#"{"explainers": [{"kind": "inlp", "options": {"iters": 3}}]}"#).contains("inlp"));
    config_error(r#"{"explainers": [{"kind": "oracle", "options": {"x": 1}}]}"#);
    config_error(r#"{"explainers": ["random", "random"]}"#);
    config_error(r#"{"seeds": []}"#);
    config_error(r#"{"seeds": [1, 1]}"#);
    config_error(r#"{"featurizer": {"kind": "native"}}"#);
    config_error(r#"{"featurizer": {"kind": "hashed", "dim": 0}}"#);
    let ok = ExperimentConfig::from_json(r#"{"explainers": [{"kind": "inlp", "options": {"iterations": 3}}], "seeds": [4]}"#)
        .unwrap();
    assert_eq!(ok.seeds, vec![4]);
    assert_eq!(ok.explainers.len(), 1);
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    assert_eq!(ExplainerKind::DEFAULT.len(), 8);
    assert!("conceptSHAP".parse::<ExplainerKind>().is_ok());
    assert!("shap".parse::<ExplainerKind>().is_err());
}

#[test]
fn oracle_scores_zero_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_evaluate(&fixture_config(dir.path(), &[ExplainerKind::Oracle, ExplainerKind::Random])).unwrap();
    let report = &outcome.report;
    let oracle: Vec<_> = report.rows.iter().filter(|r| r.explainer == "oracle").collect();
    let zero_metrics = ["cosine", "l2", "normdiff", "cace_cosine", "cace_l2", "cace_normdiff"];
    let mut checked = 0;
    for r in &oracle {
        if zero_metrics.contains(&r.metric.as_str()) {
            if let Some(v) = r.mean {
                assert_eq!(v, 0.0, "{r:?}");
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
    let random = report.row("random", "food", "all", "all", "cosine").unwrap();
    assert!(random.mean.unwrap() > 0.5);
    assert_eq!(random.seed_count, 2);
    for f in ["report.csv", "report.json", "report.txt", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(outcome.manifest.artifacts.keys().any(|k| k.starts_with("artifacts/seed1/model.cebh")));
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(&EvalReport::from_json(&json).unwrap(), report);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
}

#[test]
fn report_csv_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let kinds = [ExplainerKind::Random, ExplainerKind::Conexp, ExplainerKind::Slearner];
    run_evaluate(&fixture_config(a.path(), &kinds)).unwrap();
    run_evaluate(&fixture_config(b.path(), &kinds)).unwrap();
    let read = |d: &Path| std::fs::read(d.join("report.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn corrupt_cache_entries_are_rebuilt_with_a_notice() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), &[ExplainerKind::Random]);
    config.cache = true;
    config.seeds = vec![0];
    let first = run_evaluate(&config).unwrap();
    assert!(!first.manifest.cache.is_empty());
    assert!(first.manifest.cache.values().all(|s| *s == CacheStatus::Built));
    let second = run_evaluate(&config).unwrap();
    assert!(second.manifest.cache.values().all(|s| *s == CacheStatus::Hit));
    assert_eq!(first.report.rows, second.report.rows);

    let entry = std::fs::read_dir(dir.path().join("cache"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "bin"))
        .unwrap();
    let mut bytes = std::fs::read(&entry).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&entry, bytes).unwrap();
    let third = run_evaluate(&config).unwrap();
    assert!(third.manifest.cache.values().any(|s| *s == CacheStatus::Rebuilt));
    assert!(third.manifest.notices.iter().any(|n| n.contains("checksum mismatch") && n.contains("rebuilding")));
    assert_eq!(first.report.rows, third.report.rows);
}

#[test]
fn missing_corpus_names_the_download() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), &[ExplainerKind::Random]);
    config.corpus = CorpusSpec::Path {
        path: Some(dir.path().join("nowhere")),
        schema: None,
    };
    match run_evaluate(&config) {
        Err(Error::CorpusMissing(msg)) => assert!(msg.contains(CORPUS_ENV) && msg.contains("huggingface")),
        other => panic!("expected a missing corpus, got {other:?}"),
    }
    if std::env::var_os(CORPUS_ENV).is_none() {
        assert!(matches!(CorpusSpec::default().resolve_path(), Err(Error::CorpusMissing(_))));
    }
}

#[test]
fn embedding_featurizer_reads_a_cebe_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::fixture();
    let mut rng = cebab_core::rng::substream(0, "embed-test");
    let mut table = EmbeddingTable::new(16, "test-encoder/mean");
    for r in corpus.reviews() {
        let v: Vec<f32> = common::gaussian(&mut rng, 16).iter().map(|x| *x as f32).collect();
        table.push(r.id.clone(), &v).unwrap();
    }
    let path = dir.path().join("fixture.cebe");
    write_embedding_table(&table, &path).unwrap();

    let mut config = fixture_config(&dir.path().join("out"), &[ExplainerKind::Oracle]);
    config.featurizer = FeaturizerSpec::Embeddings { path: path.clone() };
    let outcome = run_evaluate(&config).unwrap();
    assert!(outcome.report.featurizer.contains("test-encoder/mean"));
    assert_eq!(outcome.report.model, "embeddings-mlp64");

    // A table that misses a review is rejected before training.
    let mut partial = EmbeddingTable::new(16, "test-encoder/mean");
    for r in &corpus.reviews()[1..] {
        partial.push(r.id.clone(), &[0.5; 16]).unwrap();
    }
    write_embedding_table(&partial, &path).unwrap();
    match run_evaluate(&config) {
        Err(Error::Integrity { ids, .. }) => assert_eq!(ids, vec![corpus.reviews()[0].id.clone()]),
        other => panic!("expected an integrity error, got {other:?}"),
    }
}

#[test]
fn synthetic_corpus_with_native_features() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), &[ExplainerKind::Oracle, ExplainerKind::Conexp]);
    config.corpus = CorpusSpec::Synthetic {
        spec: SyntheticSpec::default(),
        originals: 200,
        test_fraction: 0.3,
        seed: 1,
    };
    config.featurizer = FeaturizerSpec::Native;
    config.validate().unwrap();
    let report = run_evaluate(&config).unwrap().report;
    assert_eq!(report.featurizer, "synthetic-emission");
    let r = report.row("oracle", "noise", "all", "all", "l2").unwrap();
    assert_eq!(r.mean, Some(0.0));
    assert!(r.n_pairs > 0);
}

#[test]
fn artifacts_describe_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), &[ExplainerKind::Tcav]);
    config.seeds = vec![0];
    let outcome = run_evaluate(&config).unwrap();
    let model = std::fs::read(dir.path().join("artifacts/seed0/model.cebh")).unwrap();
    assert_eq!(describe_artifact(&model).unwrap()["kind"], "classifier_head");
    let aspects = std::fs::read(dir.path().join("artifacts/seed0/aspects.ceba")).unwrap();
    assert!(describe_artifact(&aspects).is_ok());
    for key in outcome.manifest.artifacts.keys().filter(|k| k.contains("/tcav/")) {
        assert!(describe_artifact(&std::fs::read(dir.path().join(key)).unwrap()).is_ok(), "{key}");
    }
    assert!(matches!(describe_artifact(b"nope"), Err(Error::Format { .. })));
}
