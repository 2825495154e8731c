//! Experiment harness for the `coordwise` optimizers: JSON configs, CSV
//! trajectories, comparisons, hyperparameter sweeps and a report that
//! re-runs the worked examples.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;

pub use error::{CliError, CliResult};
