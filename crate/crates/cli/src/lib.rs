//! Command-line surface: simulate data, infer a score matrix, evaluate it
//! against a truth file, or do all three over seeds and penalty weights.

pub mod commands;
pub mod config;

pub use commands::{eval, infer, render, run, simulate, Aggregate, RunRecord, Summary};
pub use config::{CsvSource, DataSource, RunConfig, TruthOrientation, VarSource, LAMBDA_SWEEP};
