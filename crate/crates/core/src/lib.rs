//! Online conformal prediction for panel data with kernel-weighted
//! calibration and adaptive quantile levels under partial feedback.

pub mod conformal;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod methods;
pub mod metrics;
pub mod panel;
pub mod predictor;
pub mod rng;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
