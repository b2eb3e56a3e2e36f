//! Procedural multi-object videos with exact ground truth, a slot-based video
//! model trained on depth and flow targets, and the evaluation metrics and
//! baselines used to score it.

mod error;
pub mod augment;
pub mod baselines;
pub mod checkpoint;
pub mod evaluate;
pub mod format;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scenegen;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
