//! Experiment driver: TOML configs in, tidy CSVs out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cpi_sample;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, Overrides, Plan};
pub use error::{CliError, CliResult};
