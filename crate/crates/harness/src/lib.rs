//! Replication, sweep and reporting harness for `wtqa-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod report;
pub mod selftest;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::HarnessError;
