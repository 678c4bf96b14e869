//! Experiment runner for the multilevel Picard estimator: TOML-driven
//! sweeps over depth, branching, step count and time-density exponent.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{Cell, OutputFormat, PointSpec, ReferenceKind, RunConfig};
pub use error::CliError;
pub use output::{emit, render, CSV_HEADER};
pub use run::{run, Row};
