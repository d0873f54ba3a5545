use serde::{Deserialize, Serialize};

use super::load::Corpus;
use super::types::*;

/// Ordered pair of reviews from one original that differ only in the label
/// of `concept`. Endpoints are indices into the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditPair {
    pub base: usize,
    pub edit: usize,
    pub concept: AspectName,
    pub from_value: ConceptValue,
    pub to_value: ConceptValue,
}

impl EditPair {
    pub fn reversed(&self) -> EditPair {
        EditPair {
            base: self.edit,
            edit: self.base,
            concept: self.concept,
            from_value: self.to_value,
            to_value: self.from_value,
        }
    }

    /// Stable identifier built from the endpoint review ids.
    pub fn key(&self, corpus: &Corpus) -> String {
        let r = corpus.reviews();
        format!("{}->{}:{}", r[self.base].id, r[self.edit].id, self.concept)
    }
}

/// Two reviews differ only in `concept` when every other aspect carries the
/// same state (both unlabeled, or both the same value) and none of them is a
/// no-majority label.
fn others_match(a: &Review, b: &Review, concept: AspectName) -> bool {
    AspectName::ALL.iter().filter(|x| **x != concept).all(|other| {
        match (a.aspect(*other), b.aspect(*other)) {
            (Some(Majority::NoMajority), _) | (_, Some(Majority::NoMajority)) => false,
            (x, y) => x == y,
        }
    })
}

/// Emits every ordered edit pair whose endpoints lie in `filter`. Each
/// unordered pair yields both directions, base-first in corpus order.
pub fn build_edit_pairs(corpus: &Corpus, filter: SplitFilter) -> Vec<EditPair> {
    let reviews = corpus.reviews();
    let mut out = Vec::new();
    for members in corpus.groups().values() {
        let members: Vec<usize> = members
            .iter()
            .copied()
            .filter(|i| filter.contains(reviews[*i].split))
            .collect();
        for (pos, &i) in members.iter().enumerate() {
            for &j in &members[pos + 1..] {
                let (a, b) = (&reviews[i], &reviews[j]);
                for concept in AspectName::ALL {
                    let (Some(ca), Some(cb)) = (a.aspect_value(concept), b.aspect_value(concept))
                    else {
                        continue;
                    };
                    if ca == cb || !others_match(a, b, concept) {
                        continue;
                    }
                    let pair = EditPair {
                        base: i,
                        edit: j,
                        concept,
                        from_value: ca,
                        to_value: cb,
                    };
                    out.push(pair);
                    out.push(pair.reversed());
                }
            }
        }
    }
    out
}

/// Pairs for one `(concept, c -> c')` cell.
pub fn cell<'a>(
    pairs: &'a [EditPair],
    concept: AspectName,
    from: ConceptValue,
    to: ConceptValue,
) -> impl Iterator<Item = &'a EditPair> + 'a {
    pairs
        .iter()
        .filter(move |p| p.concept == concept && p.from_value == from && p.to_value == to)
}

/// The three unordered value pairs in canonical orientation (lower value
/// first): `{Neg,Unk}`, `{Neg,Pos}`, `{Unk,Pos}`.
pub fn unordered_value_pairs() -> [(ConceptValue, ConceptValue); 3] {
    use ConceptValue::*;
    [(Negative, Unknown), (Negative, Positive), (Unknown, Positive)]
}

/// All six ordered directions.
pub fn ordered_directions() -> Vec<(ConceptValue, ConceptValue)> {
    let mut out = Vec::with_capacity(6);
    for (a, b) in unordered_value_pairs() {
        out.push((a, b));
        out.push((b, a));
    }
    out
}
