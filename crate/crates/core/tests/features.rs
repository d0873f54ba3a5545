use std::path::Path;

use proptest::prelude::*;
use sha2::{Digest, Sha256};

use cebab_core::corpus::{load_corpus, SchemaMap};
use cebab_core::features::*;
use cebab_core::Error;

fn config(dim: usize) -> HashingConfig {
    HashingConfig {
        ngram_max: 2,
        dim,
        seed: 0,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn empty_text_gives_zero_vector() {
    let v = featurize_hashed("", &config(64)).unwrap();
    assert_eq!(v, vec![0.0; 64]);
}

#[test]
fn bigrams_break_proportionality() {
    // "food good" only occurs in the repeated text.
    let a = featurize_hashed("good food", &config(256)).unwrap();
    let b = featurize_hashed("good food good food", &config(256)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn unigram_doubling_cancels() {
    let cfg = HashingConfig {
        ngram_max: 1,
        dim: 256,
        seed: 0,
    };
    let a = featurize_hashed("good food", &cfg).unwrap();
    let b = featurize_hashed("good food good food", &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn seed_changes_layout() {
    let a = featurize_hashed("the ramen was superb", &config(1024)).unwrap();
    let b = featurize_hashed(
        "the ramen was superb",
        &HashingConfig {
            seed: 7,
            ..config(1024)
        },
    )
    .unwrap();
    assert_ne!(a, b);
}

proptest! {
    #[test]
    fn hashed_vectors_are_unit_or_zero(text in "[a-z ]{0,80}") {
        let v = featurize_hashed(&text, &config(128)).unwrap();
        prop_assert_eq!(v.len(), 128);
        let n = norm(&v);
        if tokenize(&text).is_empty() {
            prop_assert_eq!(n, 0.0);
        } else {
            prop_assert!((n - 1.0).abs() < 1e-9 || n == 0.0);
        }
        prop_assert_eq!(v, featurize_hashed(&text, &config(128)).unwrap());
    }
}

/// CEBE bytes assembled by hand from the documented layout.
fn hand_encoded(records: &[(String, Vec<f32>)], dim: u32) -> Vec<u8> {
    let mut out = b"CEBE".to_vec();
    out.extend(1u32.to_le_bytes());
    out.extend((records.len() as u64).to_le_bytes());
    out.extend(dim.to_le_bytes());
    for (id, v) in records {
        out.extend((id.len() as u16).to_le_bytes());
        out.extend(id.as_bytes());
        for x in v {
            out.extend(x.to_le_bytes());
        }
    }
    out
}

#[test]
fn exporter_layout_for_ten_fixture_reviews() {
    let corpus = load_corpus(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cebab_mini"),
        &SchemaMap::default(),
    )
    .unwrap();
    let records: Vec<(String, Vec<f32>)> = corpus.reviews()[..10]
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.clone(), (0..8).map(|j| (i * 8 + j) as f32 * 0.125).collect()))
        .collect();
    let bytes = hand_encoded(&records, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.cebe");
    std::fs::write(&path, &bytes).unwrap();
    let manifest = serde_json::json!({
        "provenance": "bert-base-uncased/cls",
        "dim": 8,
        "count": 10,
        "sha256": hex::encode(Sha256::digest(&bytes)),
        "pooling": "cls",
    });
    std::fs::write(manifest_path(&path), manifest.to_string()).unwrap();

    let table = load_embedding_table(&path).unwrap();
    assert_eq!((table.len(), table.dim()), (10, 8));
    assert_eq!(table.provenance, "bert-base-uncased/cls");
    assert_eq!(table.to_bytes(), bytes);
    let featurizer = Featurizer::Table(table);
    let v = featurizer.featurize(&corpus.reviews()[3]).unwrap();
    assert_eq!(v[0], 24.0 * 0.125);
    match featurizer.featurize(&corpus.reviews()[10]) {
        Err(Error::Integrity { ids, .. }) => assert_eq!(ids, vec![corpus.reviews()[10].id.clone()]),
        other => panic!("expected integrity error, got {other:?}"),
    }

    // Rewriting through the library yields the same checksum.
    let again = dir.path().join("again.cebe");
    let table = load_embedding_table(&path).unwrap();
    assert_eq!(write_embedding_table(&table, &again).unwrap().sha256, manifest["sha256"]);
}

#[test]
fn manifest_checksum_mismatch_is_rejected() {
    let bytes = hand_encoded(&[("a".into(), vec![1.0, 2.0])], 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.cebe");
    std::fs::write(&path, &bytes).unwrap();
    let manifest = serde_json::json!({"provenance": "p", "dim": 2, "count": 1, "sha256": "00"});
    std::fs::write(manifest_path(&path), manifest.to_string()).unwrap();
    assert!(matches!(load_embedding_table(&path), Err(Error::Integrity { .. })));
}

#[test]
fn truncated_record_reports_offset() {
    let bytes = hand_encoded(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0, 4.0])], 2);
    match EmbeddingTable::from_bytes(&bytes[..bytes.len() - 3], "p") {
        Err(Error::Format { offset, .. }) => assert!(offset > 20),
        other => panic!("expected format error, got {other:?}"),
    }
}
