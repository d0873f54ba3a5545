use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Aspect-level sentiment value. The derived order (Negative < Unknown <
/// Positive) fixes canonical pair direction and tie breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptValue {
    Negative,
    Unknown,
    Positive,
}

impl ConceptValue {
    pub const ALL: [ConceptValue; 3] = [
        ConceptValue::Negative,
        ConceptValue::Unknown,
        ConceptValue::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptValue::Negative => "negative",
            ConceptValue::Unknown => "unknown",
            ConceptValue::Positive => "positive",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            ConceptValue::Negative => "Neg",
            ConceptValue::Unknown => "Unk",
            ConceptValue::Positive => "Pos",
        }
    }
}

impl fmt::Display for ConceptValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConceptValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(ConceptValue::Positive),
            "negative" | "neg" | "-" | "--" | "\u{2212}" => Ok(ConceptValue::Negative),
            "unknown" | "unk" | "can't tell" | "cant tell" => Ok(ConceptValue::Unknown),
            other => Err(Error::contract(format!("unknown concept value `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AspectName {
    Food,
    Service,
    Ambiance,
    Noise,
}

impl AspectName {
    pub const ALL: [AspectName; 4] = [
        AspectName::Food,
        AspectName::Service,
        AspectName::Ambiance,
        AspectName::Noise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AspectName::Food => "food",
            AspectName::Service => "service",
            AspectName::Ambiance => "ambiance",
            AspectName::Noise => "noise",
        }
    }
}

impl fmt::Display for AspectName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AspectName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "food" => Ok(AspectName::Food),
            "service" => Ok(AspectName::Service),
            "ambiance" | "ambience" => Ok(AspectName::Ambiance),
            "noise" => Ok(AspectName::Noise),
            other => Err(Error::contract(format!("unknown aspect `{other}`"))),
        }
    }
}

/// Outcome of the 3-of-5 majority rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Majority<T> {
    Value(T),
    NoMajority,
}

impl<T: Copy> Majority<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Majority::Value(v) => Some(*v),
            Majority::NoMajority => None,
        }
    }
}

pub type MajorityLabel = Majority<ConceptValue>;
pub type RatingMajority = Majority<u8>;

pub const NO_MAJORITY: &str = "no_majority";

impl<T: Serialize> Serialize for Majority<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Majority::Value(v) => v.serialize(serializer),
            Majority::NoMajority => serializer.serialize_str(NO_MAJORITY),
        }
    }
}

struct NoMajorityMarker;

impl<'de> Deserialize<'de> for NoMajorityMarker {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == NO_MAJORITY {
            Ok(NoMajorityMarker)
        } else {
            Err(serde::de::Error::custom(format!("expected `{NO_MAJORITY}`, got `{s}`")))
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MajorityRepr<T> {
    Value(T),
    Marker(NoMajorityMarker),
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Majority<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match MajorityRepr::<T>::deserialize(d)? {
            MajorityRepr::Value(v) => Majority::Value(v),
            MajorityRepr::Marker(_) => Majority::NoMajority,
        })
    }
}

/// Applies the 3-of-5 rule: the unique value with at least three votes, else
/// `NoMajority`.
pub fn compute_majority<T: Copy + Eq>(votes: &[T]) -> Result<Majority<T>> {
    if votes.len() != 5 {
        return Err(Error::contract(format!(
            "a vote set has exactly 5 votes, got {}",
            votes.len()
        )));
    }
    for candidate in votes {
        if votes.iter().filter(|v| *v == candidate).count() >= 3 {
            return Ok(Majority::Value(*candidate));
        }
    }
    Ok(Majority::NoMajority)
}

/// Five aspect-level validation votes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectVotes(pub [ConceptValue; 5]);

impl AspectVotes {
    pub fn majority(&self) -> MajorityLabel {
        compute_majority(&self.0).expect("fixed-length vote set")
    }
}

/// Five review-level star ratings in 1..=5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RatingVotes([u8; 5]);

impl RatingVotes {
    pub fn new(votes: [u8; 5]) -> Result<Self> {
        if let Some(bad) = votes.iter().find(|v| !(1..=5).contains(*v)) {
            return Err(Error::contract(format!("rating vote {bad} outside 1..=5")));
        }
        Ok(RatingVotes(votes))
    }

    pub fn votes(&self) -> &[u8; 5] {
        &self.0
    }

    pub fn majority(&self) -> RatingMajority {
        compute_majority(&self.0).expect("fixed-length vote set")
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().map(|v| *v as f64).sum::<f64>() / 5.0
    }
}

impl<'de> Deserialize<'de> for RatingVotes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let votes = <[u8; 5]>::deserialize(d)?;
        RatingVotes::new(votes).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditGoal {
    pub aspect: AspectName,
    pub target: ConceptValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainExclusive,
    TrainInclusive,
    Dev,
    Test,
}

impl Split {
    pub fn is_train(self) -> bool {
        matches!(self, Split::TrainExclusive | Split::TrainInclusive)
    }

    /// Grouping bucket used for split hygiene: both train variants count as
    /// one split.
    pub fn bucket(self) -> u8 {
        match self {
            Split::TrainExclusive | Split::TrainInclusive => 0,
            Split::Dev => 1,
            Split::Test => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainExclusive => "train_exclusive",
            Split::TrainInclusive => "train_inclusive",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "train_exclusive" | "exclusive" => Ok(Split::TrainExclusive),
            "train_inclusive" | "inclusive" | "train" => Ok(Split::TrainInclusive),
            "dev" | "validation" | "valid" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::contract(format!("unknown split `{other}`"))),
        }
    }
}

/// Which splits a query covers. `Train` means the inclusive train set, which
/// contains the exclusive one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitFilter {
    All,
    Train,
    TrainExclusive,
    Dev,
    Test,
}

impl SplitFilter {
    pub fn contains(self, split: Split) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Train => split.is_train(),
            SplitFilter::TrainExclusive => split == Split::TrainExclusive,
            SplitFilter::Dev => split == Split::Dev,
            SplitFilter::Test => split == Split::Test,
        }
    }
}

impl FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "all" => Ok(SplitFilter::All),
            "train" | "train_inclusive" => Ok(SplitFilter::Train),
            "train_exclusive" | "exclusive" => Ok(SplitFilter::TrainExclusive),
            "dev" | "validation" => Ok(SplitFilter::Dev),
            "test" => Ok(SplitFilter::Test),
            other => Err(Error::contract(format!("unknown split filter `{other}`"))),
        }
    }
}

/// One CEBaB text. Aspects missing from `aspect_majority` were not labeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Review {
    pub id: String,
    pub original_id: String,
    pub is_original: bool,
    pub text: String,
    #[serde(default)]
    pub edit_goal: Option<EditGoal>,
    #[serde(default)]
    pub aspect_votes: BTreeMap<AspectName, AspectVotes>,
    #[serde(default)]
    pub aspect_majority: BTreeMap<AspectName, MajorityLabel>,
    #[serde(default)]
    pub rating_votes: Option<RatingVotes>,
    #[serde(default)]
    pub rating_majority: Option<RatingMajority>,
    pub split: Split,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Review {
    pub fn aspect(&self, aspect: AspectName) -> Option<MajorityLabel> {
        self.aspect_majority.get(&aspect).copied()
    }

    /// Majority value of an aspect, `None` when unlabeled or without majority.
    pub fn aspect_value(&self, aspect: AspectName) -> Option<ConceptValue> {
        self.aspect(aspect).and_then(|m| m.value())
    }

    pub fn stars(&self) -> Option<u8> {
        self.rating_majority.and_then(|m| m.value())
    }
}
