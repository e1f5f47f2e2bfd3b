//! Multicalibration boosting.
//!
//! Post-processes the outputs of any predictor so that the chosen loss's
//! score is nearly uncorrelated with every direction an auditor can find,
//! within groups and prediction buckets.

pub mod auditors;
pub mod baselines;
pub mod boost;
pub mod dataset;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod partitions;
pub mod rng;
pub mod scores;
pub mod shift;
pub mod simgen;
pub mod stats;
pub mod stopping;

pub use error::{Error, ErrorKind, Result};
