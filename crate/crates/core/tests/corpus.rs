use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use cebab_core::corpus::*;

fn review(id: &str, original: &str, aspects: [Option<ConceptValue>; 4], stars: Option<u8>) -> Review {
    Review {
        id: id.into(),
        original_id: original.into(),
        is_original: id == original,
        text: format!("text of {id}"),
        edit_goal: None,
        aspect_votes: BTreeMap::new(),
        aspect_majority: AspectName::ALL
            .iter()
            .zip(aspects)
            .filter_map(|(a, v)| v.map(|v| (*a, Majority::Value(v))))
            .collect(),
        rating_votes: None,
        rating_majority: stars.map(Majority::Value),
        split: Split::Test,
        metadata: Default::default(),
    }
}

fn fixture() -> Corpus {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cebab_mini");
    load_corpus(&dir, &SchemaMap::default()).unwrap()
}

use ConceptValue::{Negative as Neg, Positive as Pos, Unknown as Unk};

#[test]
fn majority_rule() {
    assert_eq!(compute_majority(&[Pos, Pos, Pos, Neg, Unk]).unwrap(), Majority::Value(Pos));
    assert_eq!(compute_majority(&[Pos, Pos, Neg, Neg, Unk]).unwrap(), Majority::NoMajority);
    assert_eq!(compute_majority(&[Pos; 5]).unwrap(), Majority::Value(Pos));
    assert_eq!(compute_majority(&[5u8, 5, 5, 4, 4]).unwrap(), Majority::Value(5));
    assert_eq!(compute_majority(&[1u8, 2, 3, 4, 5]).unwrap(), Majority::NoMajority);
    assert!(compute_majority(&[1u8, 2, 3]).is_err());
}

#[test]
fn granularity_label_maps() {
    let c = Corpus::new(vec![
        review("a", "a", [None; 4], Some(5)),
        review("b", "b", [None; 4], Some(3)),
        review("c", "c", [None; 4], Some(1)),
    ])
    .unwrap();
    let all = [0, 1, 2];
    let binary = map_labels(&c, &all, TaskGranularity::Binary);
    assert_eq!(
        binary.items,
        vec![LabeledItem { review: 0, class: 1 }, LabeledItem { review: 2, class: 0 }]
    );
    let ternary = map_labels(&c, &all, TaskGranularity::Ternary);
    assert_eq!(ternary.items[1], LabeledItem { review: 1, class: 1 });
    let five = map_labels(&c, &all, TaskGranularity::FiveWay);
    assert_eq!(five.items.iter().map(|i| i.class).collect::<Vec<_>>(), vec![4, 2, 0]);
}

#[test]
fn lone_original_has_no_pairs() {
    let c = Corpus::new(vec![review("a", "a", [Some(Pos), None, None, None], Some(4))]).unwrap();
    assert!(build_edit_pairs(&c, SplitFilter::All).is_empty());
}

#[test]
fn original_and_edit_form_both_directions() {
    let c = Corpus::new(vec![
        review("a", "a", [Some(Neg), Some(Pos), None, None], Some(2)),
        review("a1", "a", [Some(Pos), Some(Pos), None, None], Some(5)),
        // Differs in two aspects: no pair with either of the above.
        review("a2", "a", [Some(Unk), Some(Neg), None, None], Some(3)),
    ])
    .unwrap();
    let pairs = build_edit_pairs(&c, SplitFilter::All);
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].reversed(), pairs[1]);
    let ate = compute_ate(&c, &pairs, TaskGranularity::FiveWay, AspectName::Food, Neg, Pos).unwrap();
    assert_eq!(ate.mean, 3.0);
    assert_eq!(ate.n_pairs, 1);
    assert_eq!(ate.std_err, None);
    assert!(compute_ate(&c, &pairs, TaskGranularity::FiveWay, AspectName::Service, Neg, Pos).is_none());
}

#[test]
fn self_pair_has_zero_effect() {
    let c = Corpus::new(vec![review("a", "a", [Some(Pos), None, None, None], Some(4))]).unwrap();
    let p = EditPair {
        base: 0,
        edit: 0,
        concept: AspectName::Food,
        from_value: Pos,
        to_value: Pos,
    };
    let ate = compute_ate(&c, &[p], TaskGranularity::FiveWay, AspectName::Food, Pos, Pos).unwrap();
    assert_eq!(ate.mean, 0.0);
}

#[test]
fn self_edit_distance_is_zero() {
    assert_eq!(normalized_edit_distance("the soup was cold", "the soup was cold"), 0.0);
}

#[test]
fn fixture_stats_are_consistent() {
    let c = fixture();
    let s = dataset_stats(&c);
    assert_eq!(s.texts, c.len());
    assert_eq!(s.originals, c.originals().count());
    assert_eq!(s.ratings.iter().sum::<usize>(), c.reviews().iter().filter(|r| r.rating_majority.is_some()).count());
    let pairs = build_edit_pairs(&c, SplitFilter::All);
    assert_eq!(s.edit_pairs, edit_pair_table(&pairs));
    let unordered: usize = s.edit_pairs.values().flat_map(|v| v.iter()).sum();
    assert_eq!(unordered * 2, pairs.len());
    assert_eq!(s.edit_distances.len(), c.len() - s.originals);
}

fn value_strategy() -> impl Strategy<Value = Option<ConceptValue>> {
    prop_oneof![Just(None), Just(Some(Neg)), Just(Some(Unk)), Just(Some(Pos))]
}

fn group_strategy() -> impl Strategy<Value = Vec<([Option<ConceptValue>; 4], Option<u8>)>> {
    let member = (
        [value_strategy(), value_strategy(), value_strategy(), value_strategy()],
        prop::option::weighted(0.9, 1u8..=5),
    );
    prop::collection::vec(member, 1..7)
}

fn random_corpus(groups: &[Vec<([Option<ConceptValue>; 4], Option<u8>)>]) -> Corpus {
    let mut reviews = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let original = format!("g{g}");
        for (m, (aspects, stars)) in members.iter().enumerate() {
            let id = if m == 0 { original.clone() } else { format!("g{g}e{m}") };
            reviews.push(review(&id, &original, *aspects, *stars));
        }
    }
    Corpus::new(reviews).unwrap()
}

proptest! {
    #[test]
    fn pairs_are_symmetric_and_ate_antisymmetric(groups in prop::collection::vec(group_strategy(), 1..12)) {
        let c = random_corpus(&groups);
        let pairs = build_edit_pairs(&c, SplitFilter::All);
        for p in &pairs {
            prop_assert!(pairs.contains(&p.reversed()));
            prop_assert_ne!(p.from_value, p.to_value);
        }
        for concept in AspectName::ALL {
            for (from, to) in ordered_directions() {
                let forward = cell(&pairs, concept, from, to).count();
                let backward = cell(&pairs, concept, to, from).count();
                prop_assert_eq!(forward, backward);
                for g in [TaskGranularity::Binary, TaskGranularity::Ternary, TaskGranularity::FiveWay] {
                    let a = compute_ate(&c, &pairs, g, concept, from, to).map(|e| e.mean);
                    let b = compute_ate(&c, &pairs, g, concept, to, from).map(|e| -e.mean);
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
