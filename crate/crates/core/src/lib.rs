//! Sequential detection of a change in the mean of Gaussian observations.
//!
//! Provides the sufficient statistics, time-varying thresholds, online
//! detectors, closed-form latency guarantees and a deterministic Monte Carlo
//! harness for measuring empirical latency and false-alarm rates.

pub mod bounds;
pub mod detectors;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod stats;
pub mod thresholds;

pub use error::{QcdError, Result};
