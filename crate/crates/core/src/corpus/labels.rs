use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::load::Corpus;
use super::pairs::{cell, EditPair};
use super::types::*;
use crate::{Error, Result};

/// Overall-sentiment task variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskGranularity {
    Binary,
    Ternary,
    #[serde(rename = "5way", alias = "five_way")]
    FiveWay,
}

impl TaskGranularity {
    pub fn classes(self) -> usize {
        match self {
            TaskGranularity::Binary => 2,
            TaskGranularity::Ternary => 3,
            TaskGranularity::FiveWay => 5,
        }
    }

    /// Class index for a star rating, `None` when the rating is dropped
    /// (3 stars under `Binary`).
    pub fn class_of_stars(self, stars: u8) -> Option<usize> {
        match (self, stars) {
            (TaskGranularity::Binary, 1 | 2) => Some(0),
            (TaskGranularity::Binary, 4 | 5) => Some(1),
            (TaskGranularity::Binary, _) => None,
            (TaskGranularity::Ternary, 1 | 2) => Some(0),
            (TaskGranularity::Ternary, 3) => Some(1),
            (TaskGranularity::Ternary, 4 | 5) => Some(2),
            (TaskGranularity::FiveWay, s @ 1..=5) => Some(s as usize - 1),
            _ => None,
        }
    }

    /// Numeric value of a class: {0,1} binary, {-1,0,1} ternary, stars 1..5.
    pub fn class_value(self, class: usize) -> f64 {
        match self {
            TaskGranularity::Binary => class as f64,
            TaskGranularity::Ternary => class as f64 - 1.0,
            TaskGranularity::FiveWay => class as f64 + 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskGranularity::Binary => "binary",
            TaskGranularity::Ternary => "ternary",
            TaskGranularity::FiveWay => "5way",
        }
    }
}

impl fmt::Display for TaskGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskGranularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "binary" | "2" | "2way" => Ok(TaskGranularity::Binary),
            "ternary" | "3" | "3way" => Ok(TaskGranularity::Ternary),
            "5way" | "five_way" | "fiveway" | "5" => Ok(TaskGranularity::FiveWay),
            other => Err(Error::Config(format!("unknown granularity `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledItem {
    pub review: usize,
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDataset {
    pub granularity: TaskGranularity,
    pub items: Vec<LabeledItem>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn restrict(&self, corpus: &Corpus, filter: SplitFilter) -> LabeledDataset {
        LabeledDataset {
            granularity: self.granularity,
            items: self
                .items
                .iter()
                .copied()
                .filter(|it| filter.contains(corpus.reviews()[it.review].split))
                .collect(),
        }
    }
}

/// Maps rating majorities onto task classes. Reviews without a rating
/// majority and reviews whose rating the granularity drops are left out.
pub fn map_labels(corpus: &Corpus, indices: &[usize], granularity: TaskGranularity) -> LabeledDataset {
    let reviews = corpus.reviews();
    let items = indices
        .iter()
        .filter_map(|&i| {
            let stars = reviews[i].stars()?;
            granularity
                .class_of_stars(stars)
                .map(|class| LabeledItem { review: i, class })
        })
        .collect();
    LabeledDataset { granularity, items }
}

/// Label-only treatment effect of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub mean: f64,
    /// Standard error of the mean; `None` for a single pair.
    pub std_err: Option<f64>,
    pub n_pairs: usize,
}

/// Mean over matching pairs of `label(edit) - label(base)`. Pairs with an
/// endpoint lacking a usable label are skipped; an empty cell is `None`.
pub fn compute_ate(
    corpus: &Corpus,
    pairs: &[EditPair],
    granularity: TaskGranularity,
    concept: AspectName,
    from: ConceptValue,
    to: ConceptValue,
) -> Option<AteEstimate> {
    let reviews = corpus.reviews();
    let value = |i: usize| {
        reviews[i]
            .stars()
            .and_then(|s| granularity.class_of_stars(s))
            .map(|c| granularity.class_value(c))
    };
    let diffs: Vec<f64> = cell(pairs, concept, from, to)
        .filter_map(|p| Some(value(p.edit)? - value(p.base)?))
        .collect();
    if diffs.is_empty() {
        return None;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let std_err = (diffs.len() > 1).then(|| {
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Some(AteEstimate {
        mean,
        std_err,
        n_pairs: diffs.len(),
    })
}
