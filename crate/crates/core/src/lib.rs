//! Granger causality discovery from the input gradients of a single
//! multivariate forecaster (KAN or MLP), trained with an L1 penalty on its
//! time-averaged input gradients.
//!
//! Modules, bottom up:
//! - [`diff`]: reverse-mode automatic differentiation with higher-order support.
//! - [`forecast`]: B-spline KAN and MLP backbones.
//! - [`data`]: series containers, Lorenz-96 and VAR generators, CSV I/O.
//! - [`causal`]: losses, training, and score-matrix extraction.
//! - [`metrics`]: AUROC and AUPRC against known edges.

pub mod causal;
pub mod data;
pub mod diff;
pub mod forecast;
pub mod metrics;

pub use causal::{fit, infer_gc_matrix, train, CausalError, GcMatrix, TrainConfig, TrainOutcome, TrainReport};
pub use data::{AdjacencyTruth, DataError, TimeSeries, WindowedDataset};
pub use diff::{DiffError, Tensor, Var};
pub use forecast::{Backbone, BackboneKind, ForecastError, SplineSpec};
pub use metrics::{auprc, auroc, evaluate, flatten, EdgeScorePairs, EvalMode, MetricsError, MetricsReport};
