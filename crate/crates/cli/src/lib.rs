//! Experiment harness for `dppbo`: config files, multi-seed sweeps, CSV
//! results and SVG charts.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ConfigIssue, ExperimentConfig};
pub use experiment::{medians, run_experiment, Cell, MedianRow, ResultRow, ResultTable};
