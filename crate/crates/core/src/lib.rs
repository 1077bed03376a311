//! Paraphrase-robustness tooling for guard-model safety scores: label flip
//! metrics, consistency targets, anchor-loss training of a surrogate scorer,
//! temperature scaling and judge-based paraphrase filtering.

pub mod aggregate;
pub mod calibrate;
pub mod error;
pub mod io;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod report;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
