//! CEBaB corpus ingestion, edit pairs, task labels and label-only statistics.

mod labels;
mod load;
mod pairs;
mod stats;
mod types;

pub use labels::{compute_ate, map_labels, AteEstimate, LabeledDataset, LabeledItem, TaskGranularity};
pub use load::{load_corpus, write_canonical_jsonl, Corpus, FieldMap, SchemaMap};
pub use pairs::{build_edit_pairs, cell, ordered_directions, unordered_value_pairs, EditPair};
pub use stats::{
    dataset_stats, edit_pair_table, normalized_edit_distance, AspectCounts, DatasetStats,
    DoubleEditStats, EDIT_DISTANCE_BINS,
};
pub use types::*;

/// The twelve cells reported in the ATE tables, as `(concept, from, to)`:
/// Neg to Pos, Neg to Unk and Pos to Unk for each aspect.
pub fn ate_table_cells() -> Vec<(AspectName, ConceptValue, ConceptValue)> {
    use ConceptValue::*;
    AspectName::ALL
        .iter()
        .flat_map(|a| {
            [(*a, Negative, Positive), (*a, Negative, Unknown), (*a, Positive, Unknown)]
        })
        .collect()
}
