//! Confident similar-sample search for small labeled tabular datasets.
//!
//! Unlabeled rows that are highly similar (Gower coefficient) to labeled
//! rows receive a weighted pseudo-label and imputed features when the
//! neighborhood vote is confident. The resulting "similar" datasets can
//! augment training data and serve as an extra test set, and the probe
//! module checks trained classifiers for stability and recourse.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod eval;
pub mod kernel;
pub mod matcher;
pub mod model;
pub mod probe;
pub mod synth;
mod util;

pub use util::{ceil_count, default_workers, nearest_rank, par_map};
