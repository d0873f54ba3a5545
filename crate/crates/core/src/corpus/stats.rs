use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::labels::TaskGranularity;
use super::load::Corpus;
use super::pairs::{build_edit_pairs, unordered_value_pairs, EditPair};
use super::types::*;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AspectCounts {
    pub positive: usize,
    pub negative: usize,
    pub unknown: usize,
    pub no_majority: usize,
}

impl AspectCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.unknown + self.no_majority
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoubleEditStats {
    /// Number of edit pairs sharing original and edit goal.
    pub pairs: usize,
    /// `|majority(a) - majority(b)|` histogram (index = star difference),
    /// over pairs where both have a rating majority.
    pub majority_diff: [usize; 5],
    /// `|mean votes(a) - mean votes(b)|` for pairs where both carry votes.
    pub mean_diffs: Vec<f64>,
    /// Joint majority class counts `[class(a)][class(b)]` per granularity.
    pub heatmaps: BTreeMap<String, Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub texts: usize,
    pub originals: usize,
    pub aspects: BTreeMap<AspectName, AspectCounts>,
    /// Star counts 1..=5 followed by the no-majority count.
    pub ratings: [usize; 6],
    /// Unordered edit-pair counts per concept in the order
    /// `{Neg,Unk}`, `{Neg,Pos}`, `{Unk,Pos}`.
    pub edit_pairs: BTreeMap<AspectName, [usize; 3]>,
    /// Normalized character edit distances between each edit and its original.
    pub edit_distances: Vec<f64>,
    pub double_edits: DoubleEditStats,
}

pub const EDIT_DISTANCE_BINS: usize = 20;

/// Character-level Levenshtein distance divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

pub fn dataset_stats(corpus: &Corpus) -> DatasetStats {
    let reviews = corpus.reviews();
    let mut aspects: BTreeMap<AspectName, AspectCounts> =
        AspectName::ALL.iter().map(|a| (*a, AspectCounts::default())).collect();
    let mut ratings = [0usize; 6];
    for r in reviews {
        for aspect in AspectName::ALL {
            let counts = aspects.get_mut(&aspect).unwrap();
            match r.aspect(aspect) {
                Some(Majority::Value(ConceptValue::Positive)) => counts.positive += 1,
                Some(Majority::Value(ConceptValue::Negative)) => counts.negative += 1,
                Some(Majority::Value(ConceptValue::Unknown)) => counts.unknown += 1,
                Some(Majority::NoMajority) => counts.no_majority += 1,
                None => {}
            }
        }
        match r.rating_majority {
            Some(Majority::Value(s)) => ratings[s as usize - 1] += 1,
            Some(Majority::NoMajority) => ratings[5] += 1,
            None => {}
        }
    }

    let pairs = build_edit_pairs(corpus, SplitFilter::All);
    let edit_pairs = edit_pair_table(&pairs);

    let original_text: BTreeMap<&str, &str> = reviews
        .iter()
        .filter(|r| r.is_original)
        .map(|r| (r.original_id.as_str(), r.text.as_str()))
        .collect();
    let edit_distances = reviews
        .iter()
        .filter(|r| !r.is_original)
        .filter_map(|r| {
            original_text
                .get(r.original_id.as_str())
                .map(|orig| normalized_edit_distance(orig, &r.text))
        })
        .collect();

    DatasetStats {
        texts: reviews.len(),
        originals: corpus.originals().count(),
        aspects,
        ratings,
        edit_pairs,
        edit_distances,
        double_edits: double_edit_stats(corpus),
    }
}

/// Unordered pair counts (ordered count halved).
pub fn edit_pair_table(pairs: &[EditPair]) -> BTreeMap<AspectName, [usize; 3]> {
    let mut table: BTreeMap<AspectName, [usize; 3]> =
        AspectName::ALL.iter().map(|a| (*a, [0; 3])).collect();
    let slots = unordered_value_pairs();
    for p in pairs {
        let key = if p.from_value < p.to_value {
            (p.from_value, p.to_value)
        } else {
            continue; // each unordered pair counted once via its canonical direction
        };
        let slot = slots.iter().position(|s| *s == key).unwrap();
        table.get_mut(&p.concept).unwrap()[slot] += 1;
    }
    table
}

fn double_edit_stats(corpus: &Corpus) -> DoubleEditStats {
    let reviews = corpus.reviews();
    let mut by_goal: BTreeMap<(&str, AspectName, ConceptValue), Vec<usize>> = BTreeMap::new();
    for (i, r) in reviews.iter().enumerate() {
        if let Some(goal) = r.edit_goal {
            by_goal
                .entry((r.original_id.as_str(), goal.aspect, goal.target))
                .or_default()
                .push(i);
        }
    }
    let granularities = [
        TaskGranularity::FiveWay,
        TaskGranularity::Ternary,
        TaskGranularity::Binary,
    ];
    let mut heatmaps: BTreeMap<String, Vec<Vec<usize>>> = granularities
        .iter()
        .map(|g| (g.as_str().to_string(), vec![vec![0; g.classes()]; g.classes()]))
        .collect();
    let mut stats = DoubleEditStats {
        pairs: 0,
        majority_diff: [0; 5],
        mean_diffs: Vec::new(),
        heatmaps: BTreeMap::new(),
    };
    for members in by_goal.values() {
        for (pos, &i) in members.iter().enumerate() {
            for &j in &members[pos + 1..] {
                stats.pairs += 1;
                let (a, b) = (&reviews[i], &reviews[j]);
                if let (Some(sa), Some(sb)) = (a.stars(), b.stars()) {
                    stats.majority_diff[sa.abs_diff(sb) as usize] += 1;
                    for g in granularities {
                        if let (Some(ca), Some(cb)) = (g.class_of_stars(sa), g.class_of_stars(sb)) {
                            heatmaps.get_mut(g.as_str()).unwrap()[ca][cb] += 1;
                        }
                    }
                }
                if let (Some(va), Some(vb)) = (a.rating_votes, b.rating_votes) {
                    stats.mean_diffs.push((va.mean() - vb.mean()).abs());
                }
            }
        }
    }
    stats.heatmaps = heatmaps;
    stats
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl DatasetStats {
    pub fn edit_distance_histogram(&self) -> [usize; EDIT_DISTANCE_BINS] {
        let mut bins = [0; EDIT_DISTANCE_BINS];
        for d in &self.edit_distances {
            let b = ((d * EDIT_DISTANCE_BINS as f64) as usize).min(EDIT_DISTANCE_BINS - 1);
            bins[b] += 1;
        }
        bins
    }

    /// Long-format CSV: `section,key,subkey,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,key,subkey,value\n");
        let _ = writeln!(out, "totals,texts,,{}", self.texts);
        let _ = writeln!(out, "totals,originals,,{}", self.originals);
        for (aspect, c) in &self.aspects {
            for (name, v) in [
                ("positive", c.positive),
                ("negative", c.negative),
                ("unknown", c.unknown),
                ("no_majority", c.no_majority),
                ("total", c.total()),
            ] {
                let _ = writeln!(out, "aspect_labels,{aspect},{name},{v}");
            }
        }
        for (i, v) in self.ratings.iter().enumerate() {
            let key = if i < 5 { format!("{}", i + 1) } else { "no_majority".into() };
            let _ = writeln!(out, "ratings,{key},,{v}");
        }
        for (aspect, counts) in &self.edit_pairs {
            for ((a, b), v) in unordered_value_pairs().iter().zip(counts) {
                let _ = writeln!(out, "edit_pairs,{aspect},{}-{},{v}", a.short(), b.short());
            }
        }
        for (i, v) in self.edit_distance_histogram().iter().enumerate() {
            let lo = i as f64 / EDIT_DISTANCE_BINS as f64;
            let _ = writeln!(out, "edit_distance,{lo:.2},,{v}");
        }
        let _ = writeln!(out, "double_edits,pairs,,{}", self.double_edits.pairs);
        for (d, v) in self.double_edits.majority_diff.iter().enumerate() {
            let _ = writeln!(out, "double_edits,majority_diff,{d},{v}");
        }
        for (g, grid) in &self.double_edits.heatmaps {
            for (a, row) in grid.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    let _ = writeln!(out, "double_edits,heatmap_{g},{a}-{b},{v}");
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "texts: {}  originals: {}\n", self.texts, self.originals);
        let _ = writeln!(
            out,
            "{:<10}{:>16}{:>16}{:>16}{:>16}{:>8}",
            "aspect", "Positive", "Negative", "Unknown", "no maj.", "Total"
        );
        for (aspect, c) in &self.aspects {
            let t = c.total();
            let cell = |v: usize| format!("{v} ({:.0}%)", pct(v, t));
            let _ = writeln!(
                out,
                "{:<10}{:>16}{:>16}{:>16}{:>16}{:>8}",
                aspect.as_str(),
                cell(c.positive),
                cell(c.negative),
                cell(c.unknown),
                cell(c.no_majority),
                t
            );
        }
        let _ = writeln!(out);
        for (i, v) in self.ratings.iter().enumerate() {
            let key = if i < 5 { format!("{} star", i + 1) } else { "no maj.".into() };
            let _ = writeln!(out, "{key:<10}{v:>8} ({:.0}%)", pct(*v, self.texts));
        }
        let _ = writeln!(out, "\n{:<10}{:>12}{:>12}{:>12}", "", "{Neg, Pos}", "{Neg, Unk}", "{Pos, Unk}");
        for (aspect, c) in &self.edit_pairs {
            let _ = writeln!(out, "{:<10}{:>12}{:>12}{:>12}", aspect.as_str(), c[1], c[0], c[2]);
        }
        let n = self.edit_distances.len();
        let mean = if n == 0 {
            0.0
        } else {
            self.edit_distances.iter().sum::<f64>() / n as f64
        };
        let _ = writeln!(out, "\nnormalized edit distance: n={n} mean={mean:.3}");
        for (i, v) in self.edit_distance_histogram().iter().enumerate() {
            let lo = i as f64 / EDIT_DISTANCE_BINS as f64;
            let _ = writeln!(out, "  [{lo:.2}, {:.2}) {v}", lo + 1.0 / EDIT_DISTANCE_BINS as f64);
        }
        let de = &self.double_edits;
        let _ = writeln!(
            out,
            "\ndouble edits: {} pairs, majority |diff| counts {:?}",
            de.pairs, de.majority_diff
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_edge_cases() {
        assert_eq!(normalized_edit_distance("same text", "same text"), 0.0);
        assert_eq!(normalized_edit_distance("", ""), 0.0);
        assert_eq!(normalized_edit_distance("abc", ""), 1.0);
        assert!((normalized_edit_distance("kitten", "sitting") - 3.0 / 7.0).abs() < 1e-12);
        // character level, not byte level
        assert_eq!(normalized_edit_distance("caf\u{e9}", "cafe"), 0.25);
    }
}
