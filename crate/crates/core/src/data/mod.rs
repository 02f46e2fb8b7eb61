//! Time-series containers, synthetic generators with known causal structure,
//! CSV ingestion, standardization and lag windows.

mod csv_io;
mod lorenz;
mod series;
mod var;

use thiserror::Error;

pub use csv_io::{format_f64, load_csv, load_matrix, load_truth, save_csv, save_matrix, save_truth};
pub use lorenz::{integrate_lorenz96, lorenz96_derivative, lorenz96_truth, rk4_step, simulate_lorenz96, Lorenz96Config};
pub use series::{make_windows, standardize, AdjacencyTruth, Standardization, TimeSeries, WindowedDataset};
pub use var::{random_sparse_var, simulate_var, VarCoefficients, VarConfig};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("series needs at least 2 rows and 1 column, got {len}x{dim}")]
    TooShort { len: usize, dim: usize },
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },
    #[error("line {line}: expected {expected} columns, found {got}")]
    Ragged { line: usize, expected: usize, got: usize },
    #[error("line {line}, column {column}: cannot parse {cell:?} as a number")]
    NonNumeric { line: usize, column: usize, cell: String },
    #[error("{0}: no data rows")]
    Empty(String),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("column {column} ({name}) has zero variance")]
    ZeroVariance { column: usize, name: String },
    #[error("lag {lag} needs 1 <= lag < series length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("integration diverged at step {step}")]
    BlowUp { step: usize },
    #[error("VAR coefficients are not stationary: companion spectral radius {spectral_radius:.6}")]
    Unstable { spectral_radius: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
