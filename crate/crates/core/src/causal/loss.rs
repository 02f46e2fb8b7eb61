//! Prediction loss, input-gradient causal scores and the gradient-L1
//! sparsity penalty.
//!
//! For each output series `j` the predictions are summed over samples into
//! one scalar `s_j`. Its gradient with respect to the whole input window
//! tensor gives, per sample, how strongly each lagged input moves the
//! prediction of `j`. Averaging `|gradient|` over samples and lags yields row
//! `j` of the score matrix. Because the penalty is built from gradients
//! recorded with `create_graph`, the training loss can be differentiated
//! with respect to the weights a second time.

use crate::data::WindowedDataset;
use crate::diff::{backward, backward_with, BackwardOptions, DiffError, Tensor, Var};
use crate::forecast::{Backbone, ForecastError};

use super::GcMatrix;

/// Graph nodes for one forward pass over a dataset.
pub struct ForwardPass {
    pub params: Vec<Var>,
    /// `[N, k * p]`, a gradient-tracking leaf when input gradients are needed.
    pub inputs: Var,
    /// `[N, p]`
    pub prediction: Var,
    pub lag: usize,
    pub dim: usize,
}

impl ForwardPass {
    /// `trainable` binds the weights as gradient leaves; `track_inputs` does
    /// the same for the input windows.
    pub fn build(
        backbone: &Backbone,
        dataset: &WindowedDataset,
        trainable: bool,
        track_inputs: bool,
    ) -> Result<Self, ForecastError> {
        let params = if trainable { backbone.bind() } else { backbone.bind_frozen() };
        let inputs = if track_inputs {
            Var::param(dataset.inputs.clone())
        } else {
            Var::constant(dataset.inputs.clone())
        };
        let prediction = backbone.forward_with(&params, &inputs)?;
        Ok(Self {
            params,
            inputs,
            prediction,
            lag: dataset.lag,
            dim: dataset.dim,
        })
    }
}

/// Mean squared error over samples and output coordinates against the
/// next-step targets.
pub fn prediction_loss(prediction: &Var, targets: &Tensor) -> Result<Var, DiffError> {
    Ok(prediction.sub(&Var::constant(targets.clone()))?.square().mean())
}

/// `s_j = sum_n prediction[n, j]`, one scalar per output series.
pub fn summed_outputs(prediction: &Var) -> Result<Vec<Var>, DiffError> {
    let p = prediction.shape()[1];
    (0..p).map(|j| Ok(prediction.slice(1, j, j + 1)?.sum())).collect()
}

/// Gradient of `summed` with respect to every input element, shaped
/// `[N, k, p]` (sample, lag, variable). Lag index 0 is the oldest step.
pub fn input_gradient_matrix(summed: &Var, pass: &ForwardPass, create_graph: bool) -> Result<Var, DiffError> {
    let opts = BackwardOptions {
        create_graph,
        retain_graph: true,
    };
    let grad = backward_with(summed, std::slice::from_ref(&pass.inputs), opts)?.remove(0);
    let n = pass.inputs.shape()[0];
    grad.reshape(&[n, pass.lag, pass.dim])
}

/// One score row: mean over samples and lags of `|gradient|`, per variable.
pub fn gc_average(gradients: &Var) -> Result<Var, DiffError> {
    let shape = gradients.shape();
    if shape.len() != 3 {
        return Err(DiffError::RankMismatch {
            op: "gc_average",
            expected: 3,
            shape: shape.to_vec(),
        });
    }
    gradients
        .abs()
        .reshape(&[shape[0] * shape[1], shape[2]])?
        .mean_axis(0)
}

/// `lambda * sum_j ||row_j||_1`.
pub fn sparsity_loss(rows: &[Var], lambda: f64) -> Var {
    let mut total = Var::scalar(0.0);
    for row in rows {
        total = total.add(&row.abs().sum()).expect("scalars add");
    }
    total.scale(lambda)
}

/// The pieces of the combined objective for one pass.
pub struct LossTerms {
    pub total: Var,
    pub prediction: Var,
    pub sparsity: Var,
    /// Score rows built during the pass; empty when `lambda == 0`.
    pub rows: Vec<Var>,
}

/// Builds `L = L_p + L_s` on an existing pass. The score rows are recorded
/// with `create_graph`, so `L` is differentiable with respect to the weights
/// through the input gradients.
pub fn loss_terms(pass: &ForwardPass, targets: &Tensor, lambda: f64) -> Result<LossTerms, DiffError> {
    let prediction = prediction_loss(&pass.prediction, targets)?;
    let mut rows = Vec::new();
    if lambda > 0.0 {
        for s in summed_outputs(&pass.prediction)? {
            let g = input_gradient_matrix(&s, pass, true)?;
            rows.push(gc_average(&g)?);
        }
    }
    let sparsity = if rows.is_empty() {
        Var::scalar(0.0)
    } else {
        sparsity_loss(&rows, lambda)
    };
    let total = prediction.add(&sparsity)?;
    Ok(LossTerms {
        total,
        prediction,
        sparsity,
        rows,
    })
}

/// `L_p + L_s` for `backbone` on `dataset`, with trainable weights.
pub fn total_loss(backbone: &Backbone, dataset: &WindowedDataset, lambda: f64) -> Result<(ForwardPass, LossTerms), ForecastError> {
    let pass = ForwardPass::build(backbone, dataset, true, lambda > 0.0)?;
    let terms = loss_terms(&pass, &dataset.targets, lambda)?;
    Ok((pass, terms))
}

/// Values of the loss components after one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub prediction: f64,
    pub sparsity: f64,
}

/// Cap on `samples * (n_out * n_in)` for the per-sample layer Jacobians held
/// at once by [`loss_gradients`].
const JACOBIAN_BUDGET: usize = 1 << 18;

/// Fewest samples per chunk, whatever the layer widths.
const MIN_CHUNK: usize = 32;

/// Contiguous sample ranges of near-equal length, each small enough that
/// its layer Jacobians respect [`JACOBIAN_BUDGET`].
fn sample_chunks(n: usize, backbone: &Backbone) -> Vec<std::ops::Range<usize>> {
    let widest = backbone
        .tensors()
        .iter()
        .filter(|t| t.shape().len() == 2)
        .map(|t| t.numel())
        .max()
        .unwrap_or(1)
        .max(1);
    let per_chunk = (JACOBIAN_BUDGET / widest).max(MIN_CHUNK);
    let count = n.div_ceil(per_chunk).max(1);
    (0..count).map(|c| c * n / count..(c + 1) * n / count).collect()
}

/// Gradient of `L_p + L_s` with respect to every parameter tensor, in
/// declaration order, along with the loss values.
///
/// Computes the same objective as [`total_loss`] without one backward pass
/// per output series: the input gradients of all summed outputs are the
/// per-sample Jacobians `d prediction[n] / d window[n]`, built as products of
/// layer Jacobians. Since
/// `L_s = lambda / (N k) * sum_{n, j, l, i} |J[n, j, (l, i)]|`
/// is a sum over samples, the work is split into sample chunks whose
/// gradients are accumulated.
pub fn loss_gradients(
    backbone: &Backbone,
    dataset: &WindowedDataset,
    lambda: f64,
) -> Result<(LossValues, Vec<Tensor>), ForecastError> {
    let n = dataset.len();
    let (p, k) = (dataset.dim, dataset.lag);
    let mut grads: Vec<Tensor> = backbone.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut values = LossValues {
        total: 0.0,
        prediction: 0.0,
        sparsity: 0.0,
    };
    let chunks = if lambda > 0.0 { sample_chunks(n, backbone) } else { vec![0..n] };
    for range in chunks {
        let part = if range.len() == n {
            dataset.clone()
        } else {
            dataset.select(&range.collect::<Vec<_>>())
        };
        let params = backbone.bind();
        let inputs = Var::constant(part.inputs.clone());
        let (prediction, jacobian) = if lambda > 0.0 {
            let (pred, jac) = backbone.forward_jacobian_with(&params, &inputs)?;
            (pred, Some(jac))
        } else {
            (backbone.forward_with(&params, &inputs)?, None)
        };
        let lp = prediction
            .sub(&Var::constant(part.targets.clone()))?
            .square()
            .sum()
            .scale(1.0 / (n * p) as f64);
        let mut total = lp.clone();
        if let Some(jac) = jacobian {
            let ls = jac.abs().sum().scale(lambda / (n * k) as f64);
            values.sparsity += ls.item();
            total = total.add(&ls)?;
        }
        values.prediction += lp.item();
        for (acc, g) in grads.iter_mut().zip(backward(&total, &params, false)?) {
            for (a, b) in acc.data_mut().iter_mut().zip(g.value().data()) {
                *a += b;
            }
        }
    }
    values.total = values.prediction + values.sparsity;
    Ok((values, grads))
}

/// Score matrix of a (trained) backbone on `dataset`.
pub fn infer_gc_matrix(backbone: &Backbone, dataset: &WindowedDataset) -> Result<GcMatrix, ForecastError> {
    let pass = ForwardPass::build(backbone, dataset, false, true)?;
    let p = dataset.dim;
    let mut scores = Vec::with_capacity(p * p);
    for s in summed_outputs(&pass.prediction)? {
        let g = input_gradient_matrix(&s, &pass, false)?;
        scores.extend_from_slice(gc_average(&g)?.value().data());
    }
    Ok(GcMatrix::new(p, scores).expect("absolute means are finite and non-negative"))
}
