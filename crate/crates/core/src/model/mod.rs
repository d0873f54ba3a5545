//! Classifier heads over feature vectors: the explained sentiment model and
//! the per-aspect label predictors.

mod aspects;
mod head;
mod io;
mod train;

pub use aspects::{train_aspect_set, AspectClassifierSet, AspectLabels, ASPECT_SET_MAGIC};
pub use head::{Architecture, ClassifierHead};
pub use io::{
    decode_artifact, encode_artifact, head_from_bytes, head_to_bytes, load_head, save_head, HEAD_MAGIC,
};
pub use train::{
    accuracy, fit_head, macro_f1, mean_loss, train_head, Adam, Batches, Targets, TrainConfig, TrainReport,
};
pub(crate) use train::{check_finite_loss, loss_report, safe_ln};
