use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::types::*;
use crate::{Error, Result};

/// Maps published field names onto canonical review fields.
///
/// `{aspect}` in the aspect templates is replaced by the lowercase aspect name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldMap {
    pub id: String,
    pub original_id: String,
    pub is_original: String,
    pub text: String,
    pub edit_type: String,
    pub edit_goal: String,
    pub split: String,
    pub rating_majority: String,
    pub rating_distribution: String,
    pub aspect_majority: String,
    pub aspect_distribution: String,
    /// Split assigned to records without a split field, overriding the file
    /// name convention.
    pub default_split: Option<Split>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            original_id: "original_id".into(),
            is_original: "is_original".into(),
            text: "description".into(),
            edit_type: "edit_type".into(),
            edit_goal: "edit_goal".into(),
            split: "split".into(),
            rating_majority: "review_majority".into(),
            rating_distribution: "review_label_distribution".into(),
            aspect_majority: "{aspect}_aspect_majority".into(),
            aspect_distribution: "{aspect}_aspect_label_distribution".into(),
            default_split: None,
        }
    }
}

/// How records are interpreted on ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum SchemaMap {
    /// The crate's own JSONL layout (see [`write_canonical_jsonl`]).
    Canonical,
    /// Published layout with configurable field names.
    Fields(FieldMap),
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap::Fields(FieldMap::default())
    }
}

impl SchemaMap {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("schema map {}: {e}", path.display()),
        })
    }
}

/// Immutable, validated collection of reviews.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    reviews: Vec<Review>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates invariants and builds the id index.
    pub fn new(reviews: Vec<Review>) -> Result<Self> {
        let mut index = HashMap::with_capacity(reviews.len());
        let mut duplicates = Vec::new();
        for (i, r) in reviews.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                duplicates.push(r.id.clone());
            }
        }
        if !duplicates.is_empty() {
            return Err(Error::Integrity {
                message: "duplicate review ids".into(),
                ids: duplicates,
            });
        }
        let corpus = Corpus { reviews, index };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        let mut goal_on_original = Vec::new();
        let mut orphan = Vec::new();
        let mut vote_mismatch = Vec::new();
        let rooted: std::collections::HashSet<&str> = self
            .reviews
            .iter()
            .filter(|r| r.is_original)
            .map(|r| r.original_id.as_str())
            .collect();
        for r in &self.reviews {
            if r.is_original && r.edit_goal.is_some() {
                goal_on_original.push(r.id.clone());
            }
            if !r.is_original && !rooted.contains(r.original_id.as_str()) {
                orphan.push(r.id.clone());
            }
            let aspects_ok = r.aspect_votes.iter().all(|(a, v)| r.aspect(*a) == Some(v.majority()));
            let rating_ok = r
                .rating_votes
                .map_or(true, |v| r.rating_majority == Some(v.majority()));
            if !aspects_ok || !rating_ok {
                vote_mismatch.push(r.id.clone());
            }
        }
        if !goal_on_original.is_empty() {
            return Err(Error::Integrity {
                message: "original reviews must not carry an edit goal".into(),
                ids: goal_on_original,
            });
        }
        if !orphan.is_empty() {
            return Err(Error::Integrity {
                message: "no original review shares this original_id".into(),
                ids: orphan,
            });
        }
        if !vote_mismatch.is_empty() {
            return Err(Error::Integrity {
                message: "supplied majority disagrees with votes".into(),
                ids: vote_mismatch,
            });
        }

        let mut bucket_of: HashMap<&str, (u8, &str)> = HashMap::new();
        let mut exclusive: HashMap<&str, usize> = HashMap::new();
        let mut leaking = Vec::new();
        let mut crowded = Vec::new();
        for r in &self.reviews {
            let bucket = r.split.bucket();
            match bucket_of.get(r.original_id.as_str()) {
                Some((b, _)) if *b != bucket => leaking.push(r.id.clone()),
                Some(_) => {}
                None => {
                    bucket_of.insert(&r.original_id, (bucket, &r.id));
                }
            }
            if r.split == Split::TrainExclusive {
                let n = exclusive.entry(&r.original_id).or_default();
                *n += 1;
                if *n > 1 {
                    crowded.push(r.id.clone());
                }
            }
        }
        if !leaking.is_empty() {
            return Err(Error::Integrity {
                message: "edit group spans more than one split".into(),
                ids: leaking,
            });
        }
        if !crowded.is_empty() {
            return Err(Error::Integrity {
                message: "exclusive train split holds more than one text per original".into(),
                ids: crowded,
            });
        }
        Ok(())
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Review> {
        self.index.get(id).map(|i| &self.reviews[*i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn originals(&self) -> impl Iterator<Item = &Review> {
        self.reviews.iter().filter(|r| r.is_original)
    }

    /// Review indices grouped by `original_id`, groups sorted by id, members in
    /// corpus order.
    pub fn groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.reviews.iter().enumerate() {
            groups.entry(r.original_id.as_str()).or_default().push(i);
        }
        groups
    }

    /// Indices of reviews in the given splits.
    pub fn select(&self, filter: SplitFilter) -> Vec<usize> {
        (0..self.reviews.len())
            .filter(|i| filter.contains(self.reviews[*i].split))
            .collect()
    }

    /// Hex sha256 of the canonical JSONL encoding.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        write_canonical(&self.reviews, &mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

fn write_canonical(reviews: &[Review], out: &mut impl Write) -> std::io::Result<()> {
    for r in reviews {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes one canonical review per line (UTF-8, LF endings).
pub fn write_canonical_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_canonical(corpus.reviews(), &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a corpus from a JSON array file, a JSON-Lines file, or a directory of
/// per-split files (`train_exclusive`, `train_inclusive`, `validation`/`dev`,
/// `test`, with `.json` or `.jsonl` extension).
///
/// When a directory holds both train files, texts of the exclusive file are
/// tagged `TrainExclusive` and the remaining inclusive texts `TrainInclusive`.
pub fn load_corpus(source: &Path, schema: &SchemaMap) -> Result<Corpus> {
    let mut reviews = Vec::new();
    if source.is_dir() {
        let order = [
            ("train_exclusive", Split::TrainExclusive),
            ("train_inclusive", Split::TrainInclusive),
            ("validation", Split::Dev),
            ("dev", Split::Dev),
            ("test", Split::Test),
        ];
        let mut seen: HashMap<String, ()> = HashMap::new();
        let mut found = false;
        for (stem, split) in order {
            for ext in ["json", "jsonl"] {
                let path = source.join(format!("{stem}.{ext}"));
                if !path.exists() {
                    continue;
                }
                found = true;
                for r in load_file(&path, schema, Some(split))? {
                    if seen.insert(r.id.clone(), ()).is_none() {
                        reviews.push(r);
                    }
                }
            }
        }
        if !found {
            return Err(Error::io(
                source,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "directory holds no train_exclusive/train_inclusive/validation/test files",
                ),
            ));
        }
    } else {
        let split = source
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<Split>().ok());
        reviews = load_file(source, schema, split)?;
    }
    Corpus::new(reviews)
}

fn load_file(path: &Path, schema: &SchemaMap, file_split: Option<Split>) -> Result<Vec<Review>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_records(&text)?;
    let mut out = Vec::with_capacity(records.len());
    let mut mismatched = Vec::new();
    for (line, value) in records {
        let parsed = match schema {
            SchemaMap::Canonical => serde_json::from_value::<Review>(value)
                .map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })
                .map(|r| (r, false)),
            SchemaMap::Fields(map) => from_fields(value, map, file_split, line),
        };
        let (review, mismatch) = parsed?;
        if mismatch {
            mismatched.push(review.id.clone());
        }
        out.push(review);
    }
    if !mismatched.is_empty() {
        return Err(Error::Integrity {
            message: "supplied majority disagrees with votes".into(),
            ids: mismatched,
        });
    }
    Ok(out)
}

/// Returns `(line, record)` pairs. Line numbers are 1-based; for JSON arrays
/// each record reports the line the array starts on.
fn parse_records(text: &str) -> Result<Vec<(usize, Value)>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let start_line = text[..text.len() - trimmed.len()].matches('\n').count() + 1;
        let values: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        return Ok(values.into_iter().map(|v| (start_line, v)).collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

fn is_blank(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.trim().is_empty(),
        _ => false,
    }
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_aspect_majority(v: &Value) -> Option<std::result::Result<MajorityLabel, ()>> {
    if is_blank(v) {
        return None;
    }
    let s = v.as_str()?;
    let lower = s.trim().to_lowercase();
    if lower.starts_with("no maj") || lower == NO_MAJORITY {
        return Some(Ok(Majority::NoMajority));
    }
    Some(lower.parse::<ConceptValue>().map(Majority::Value).map_err(|_| ()))
}

fn parse_rating_majority(v: &Value) -> Option<std::result::Result<RatingMajority, ()>> {
    if is_blank(v) {
        return None;
    }
    let star = match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => {
            let lower = s.trim().to_lowercase();
            if lower.starts_with("no maj") || lower == NO_MAJORITY {
                return Some(Ok(Majority::NoMajority));
            }
            lower.parse::<u64>().ok()
        }
        _ => None,
    };
    Some(match star {
        Some(s @ 1..=5) => Ok(Majority::Value(s as u8)),
        _ => Err(()),
    })
}

/// Expands a label distribution (`{"Positive": 3, ...}`) or a vote list into
/// exactly five votes. Distributions not summing to five yield `None`.
fn expand_votes<T, F>(v: &Value, parse: F) -> Option<std::result::Result<Vec<T>, ()>>
where
    F: Fn(&str) -> Option<T>,
    T: Copy,
{
    if is_blank(v) {
        return None;
    }
    let mut votes = Vec::new();
    match v {
        Value::Object(map) => {
            for (label, count) in map {
                let Some(count) = count.as_u64() else {
                    return Some(Err(()));
                };
                if count == 0 {
                    continue;
                }
                let Some(value) = parse(label) else {
                    return Some(Err(()));
                };
                votes.extend(std::iter::repeat(value).take(count as usize));
            }
        }
        Value::Array(items) => {
            for item in items {
                let label = match item {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Some(Err(())),
                };
                let Some(value) = parse(&label) else {
                    return Some(Err(()));
                };
                votes.push(value);
            }
        }
        _ => return Some(Err(())),
    }
    if votes.len() == 5 {
        Some(Ok(votes))
    } else {
        None
    }
}

fn from_fields(
    value: Value,
    map: &FieldMap,
    file_split: Option<Split>,
    line: usize,
) -> Result<(Review, bool)> {
    let Value::Object(mut obj) = value else {
        return Err(Error::Parse {
            line,
            message: "record is not a JSON object".into(),
        });
    };
    let record_label = obj
        .get(&map.id)
        .and_then(as_id)
        .unwrap_or_else(|| format!("<line {line}>"));
    let schema_err = |field: &str| Error::Schema {
        field: field.to_string(),
        record: record_label.clone(),
    };

    let id = obj.remove(&map.id).as_ref().and_then(as_id).ok_or_else(|| schema_err(&map.id))?;
    let original_id = obj
        .remove(&map.original_id)
        .as_ref()
        .and_then(as_id)
        .ok_or_else(|| schema_err(&map.original_id))?;
    let is_original = match obj.remove(&map.is_original) {
        Some(Value::Bool(b)) => b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        _ => return Err(schema_err(&map.is_original)),
    };
    let text = match obj.remove(&map.text) {
        Some(Value::String(s)) => s,
        _ => return Err(schema_err(&map.text)),
    };

    let edit_type = obj.remove(&map.edit_type).unwrap_or(Value::Null);
    let edit_target = obj.remove(&map.edit_goal).unwrap_or(Value::Null);
    let edit_goal = if is_blank(&edit_type) && is_blank(&edit_target) {
        None
    } else {
        let aspect = edit_type
            .as_str()
            .and_then(|s| s.parse::<AspectName>().ok())
            .ok_or_else(|| schema_err(&map.edit_type))?;
        let target = edit_target
            .as_str()
            .and_then(|s| s.parse::<ConceptValue>().ok())
            .ok_or_else(|| schema_err(&map.edit_goal))?;
        Some(EditGoal { aspect, target })
    };

    let split = match obj.remove(&map.split) {
        Some(Value::String(s)) => s.parse::<Split>().map_err(|_| schema_err(&map.split))?,
        Some(Value::Null) | None => map
            .default_split
            .or(file_split)
            .ok_or_else(|| schema_err(&map.split))?,
        Some(_) => return Err(schema_err(&map.split)),
    };

    let mut mismatch = false;
    let mut aspect_votes = BTreeMap::new();
    let mut aspect_majority = BTreeMap::new();
    for aspect in AspectName::ALL {
        let maj_field = map.aspect_majority.replace("{aspect}", aspect.as_str());
        let dist_field = map.aspect_distribution.replace("{aspect}", aspect.as_str());
        let supplied = match obj.remove(&maj_field).as_ref().and_then(parse_aspect_majority) {
            Some(Ok(m)) => Some(m),
            Some(Err(())) => return Err(schema_err(&maj_field)),
            None => None,
        };
        let votes = match obj
            .remove(&dist_field)
            .as_ref()
            .and_then(|v| expand_votes(v, |s| s.parse::<ConceptValue>().ok()))
        {
            Some(Ok(v)) => Some(AspectVotes([v[0], v[1], v[2], v[3], v[4]])),
            Some(Err(())) => return Err(schema_err(&dist_field)),
            None => None,
        };
        match (supplied, votes) {
            (Some(m), Some(v)) => {
                if m != v.majority() {
                    mismatch = true;
                }
                aspect_votes.insert(aspect, v);
                aspect_majority.insert(aspect, m);
            }
            (None, Some(v)) => {
                aspect_majority.insert(aspect, v.majority());
                aspect_votes.insert(aspect, v);
            }
            (Some(m), None) => {
                aspect_majority.insert(aspect, m);
            }
            (None, None) => {}
        }
    }

    let supplied_rating = match obj
        .remove(&map.rating_majority)
        .as_ref()
        .and_then(parse_rating_majority)
    {
        Some(Ok(m)) => Some(m),
        Some(Err(())) => return Err(schema_err(&map.rating_majority)),
        None => None,
    };
    let rating_votes = match obj
        .remove(&map.rating_distribution)
        .as_ref()
        .and_then(|v| expand_votes(v, |s| s.trim().parse::<u8>().ok().filter(|n| (1..=5).contains(n))))
    {
        Some(Ok(v)) => Some(RatingVotes::new([v[0], v[1], v[2], v[3], v[4]])?),
        Some(Err(())) => return Err(schema_err(&map.rating_distribution)),
        None => None,
    };
    let rating_majority = match (supplied_rating, rating_votes) {
        (Some(m), Some(v)) => {
            if m != v.majority() {
                mismatch = true;
            }
            Some(m)
        }
        (None, Some(v)) => Some(v.majority()),
        (m, None) => m,
    };

    let metadata: Map<String, Value> = obj;
    Ok((
        Review {
            id,
            original_id,
            is_original,
            text,
            edit_goal,
            aspect_votes,
            aspect_majority,
            rating_votes,
            rating_majority,
            split,
            metadata,
        },
        mismatch,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn record(id: &str, orig: &str, food_dist: Value, food_maj: Value) -> Value {
        json!({
            "id": id, "original_id": orig, "is_original": id == orig,
            "description": "The food was fine.",
            "edit_type": if id == orig { Value::Null } else { json!("food") },
            "edit_goal": if id == orig { Value::Null } else { json!("Negative") },
            "food_aspect_majority": food_maj,
            "food_aspect_label_distribution": food_dist,
            "review_majority": "4",
            "review_label_distribution": {"4": 3, "5": 2},
            "opentable_metadata": {"restaurant_id": 12},
            "split": "test"
        })
    }

    fn write_jsonl(dir: &Path, values: &[Value]) -> std::path::PathBuf {
        let path = dir.join("corpus.jsonl");
        let body: String = values.iter().map(|v| format!("{v}\n")).collect();
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn majorities_recomputed_from_distributions() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(
            dir.path(),
            &[
                record("1", "1", json!({"Positive": 3, "Negative": 1, "unknown": 1}), json!("")),
                record("2", "1", json!({"Positive": 2, "Negative": 2, "unknown": 1}), json!("")),
            ],
        );
        let corpus = load_corpus(&path, &SchemaMap::default()).unwrap();
        let food = |id: &str| corpus.get(id).unwrap().aspect(AspectName::Food);
        assert_eq!(food("1"), Some(Majority::Value(ConceptValue::Positive)));
        assert_eq!(food("2"), Some(Majority::NoMajority));
        let r = corpus.get("1").unwrap();
        assert_eq!(r.stars(), Some(4));
        assert!(r.metadata.contains_key("opentable_metadata"));
        assert_eq!(r.aspect(AspectName::Noise), None);
    }

    #[test]
    fn vote_majority_mismatch_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(
            dir.path(),
            &[record("1", "1", json!({"Positive": 3, "unknown": 2}), json!("Negative"))],
        );
        match load_corpus(&path, &SchemaMap::default()) {
            Err(Error::Integrity { ids, .. }) => assert_eq!(ids, vec!["1".to_string()]),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_field_and_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = record("7", "7", json!(""), json!("Positive"));
        rec.as_object_mut().unwrap().remove("description");
        let path = write_jsonl(dir.path(), &[rec]);
        match load_corpus(&path, &SchemaMap::default()) {
            Err(Error::Schema { field, record }) => {
                assert_eq!(field, "description");
                assert_eq!(record, "7");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = record("1", "1", json!(""), json!("Positive"));
        fs::write(&path, format!("{good}\n{{\"id\": \n")).unwrap();
        match load_corpus(&path, &SchemaMap::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn orphan_edit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(dir.path(), &[record("2", "1", json!(""), json!("Negative"))]);
        assert!(matches!(
            load_corpus(&path, &SchemaMap::default()),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_jsonl(
            dir.path(),
            &[
                record("1", "1", json!({"Positive": 5}), json!("Positive")),
                record("2", "1", json!({"Negative": 4, "unknown": 1}), json!("Negative")),
            ],
        );
        let corpus = load_corpus(&path, &SchemaMap::default()).unwrap();
        let out = dir.path().join("canonical.jsonl");
        write_canonical_jsonl(&corpus, &out).unwrap();
        let again = load_corpus(&out, &SchemaMap::Canonical).unwrap();
        assert_eq!(corpus.reviews(), again.reviews());
        assert_eq!(corpus.content_hash(), again.content_hash());
    }

    #[test]
    fn schema_map_config_parses() {
        let map: SchemaMap =
            serde_json::from_str(r#"{"format": "fields", "text": "review_text"}"#).unwrap();
        match map {
            SchemaMap::Fields(f) => {
                assert_eq!(f.text, "review_text");
                assert_eq!(f.id, "id");
            }
            _ => panic!(),
        }
        assert!(serde_json::from_str::<SchemaMap>(r#"{"format": "fields", "bogus": 1}"#).is_err());
    }
}
