//! Granger causality from the input gradients of one joint forecaster.
//!
//! A single backbone predicts every series from a shared lag window. The
//! score of edge `i -> j` is the mean absolute gradient of the summed
//! predictions of `j` with respect to the lagged values of `i`. Training adds
//! an L1 penalty on those scores, optimized through second-order gradients.

mod adam;
mod loss;
mod matrix;
mod train;

use thiserror::Error;

use crate::data::DataError;
use crate::diff::DiffError;
use crate::forecast::ForecastError;

pub use adam::Adam;
pub use loss::{
    gc_average, infer_gc_matrix, input_gradient_matrix, loss_gradients, loss_terms, prediction_loss, sparsity_loss,
    summed_outputs, total_loss, ForwardPass, LossTerms, LossValues,
};
pub use matrix::GcMatrix;
pub use train::{fit, train, EpochRecord, TrainConfig, TrainOutcome, TrainReport};

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("series of length {len} is too short for lag {lag} (need more than lag + 10 rows)")]
    TooShort { len: usize, lag: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
