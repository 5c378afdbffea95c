//! Phase-wise decomposition and alignment for open-vocabulary temporal
//! action detection.
//!
//! Action labels are decomposed into per-phase descriptions, each phase
//! filters the video's snippet features by text similarity, and the per-phase
//! class scores are combined with learned weights.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apa;
pub mod backbone;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod params;
pub mod pipeline;
pub mod postprocess;
pub mod semantics;
pub mod tif;

pub use error::{PdaError, Result};
