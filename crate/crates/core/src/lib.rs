//! Neural music remixing: a separator network trained jointly for source
//! separation and per-source volume control, with the evaluation stack used
//! to measure remix quality and loudness accuracy.

pub mod cli;
pub mod data;
pub mod diff;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod service;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
