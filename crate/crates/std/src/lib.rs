//! Command-line driver for `charter-core`: configuration files, CSV results,
//! run transcripts, sweeps over a worker pool and the DP-SGD comparison.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod results;
pub mod runner;
pub mod transcript;

pub use config::ExperimentConfig;
pub use error::CliError;
