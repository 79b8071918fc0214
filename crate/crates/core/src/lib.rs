//! Multi-task affect-aware dialogue generation toolkit.
//!
//! A micro decoder-only transformer trained jointly on language modeling,
//! affect prediction and next-utterance discrimination, together with the
//! decoding strategies, automatic metrics, crowd-rating pipeline and
//! statistical analyses used to evaluate it.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod evalpipe;
pub mod generator;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod synthetic;
pub mod tokenizer;
pub mod trainer;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
