//! Evaluation of concept-based explanation methods as causal effect estimators.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: ingestion of the CEBaB review corpus, majority labels, edit
//!   pairs, task granularities and label-only statistics (ground-truth ATE).
//! - [`features`]: text featurizers (signed n-gram hashing) and the binary
//!   embedding table format.
//! - [`model`]: trainable classifier heads with logits and analytic input
//!   gradients, plus per-aspect classifiers.
//! - [`explainers`]: every evaluated explanation method, each returning an
//!   [`EffectVector`](explainers::EffectVector).
//! - [`metrics`]: ICaCE, ICaCE-Error under three distances, CaCE, ACaCE and
//!   seed aggregation.
//! - [`synthgen`]: a synthetic causal generator with exact oracles.
//! - [`experiment`]: declarative experiment configs, the evaluation pipeline
//!   and report rendering used by the `cebab` binary.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod explainers;
pub mod features;
pub(crate) mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
