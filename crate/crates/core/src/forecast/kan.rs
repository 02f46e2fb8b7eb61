//! Kolmogorov-Arnold layers: every edge carries `w_b * silu(x) + w_s * spline(x)`.

use super::spline::{SplineBasis, SplineSpec};
use super::{identity_jacobian, Forecaster};
use crate::diff::{DiffError, Tensor, Var};

/// Trainable tensors of one KAN layer.
#[derive(Clone, Debug, PartialEq)]
pub struct KanLayerParams {
    /// `[n_out, n_in]`
    pub base_weight: Tensor,
    /// `[n_out, n_in]`
    pub spline_weight: Tensor,
    /// `[n_out, n_in, grid_size + degree]`
    pub coefficients: Tensor,
}

impl KanLayerParams {
    pub fn n_in(&self) -> usize {
        self.base_weight.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.base_weight.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KanParams {
    pub spline: SplineSpec,
    pub layers: Vec<KanLayerParams>,
}

/// One KAN layer on a `[batch, n_in]` input:
/// `out[b, o] = sum_in W_b[o, in] silu(x[b, in]) + W_s[o, in] sum_i c[o, in, i] B_i(x[b, in])`.
///
/// Written as two matrix products over the silu and basis features so that
/// the whole layer stays inside the differentiable graph.
pub fn kan_layer_forward(
    input: &Var,
    base_weight: &Var,
    spline_weight: &Var,
    coefficients: &Var,
    spec: SplineSpec,
) -> Result<Var, DiffError> {
    let n_in = base_weight.shape()[1];
    let nb = spec.num_basis();
    if input.shape().len() != 2 || input.shape()[1] != n_in {
        return Err(DiffError::ShapeMismatch {
            op: "kan_layer",
            lhs: input.shape().to_vec(),
            rhs: base_weight.shape().to_vec(),
        });
    }
    let base = input.silu().matmul_t(base_weight, false, true)?;
    let scaled = scaled_coefficients(spline_weight, coefficients, nb)?;
    let spline = SplineBasis::apply(spec, input)?.matmul_t(&scaled, false, true)?;
    base.add(&spline)
}

/// Effective coefficients `W_s[o, in] * c[o, in, i]`, laid out `[n_out, n_in * nb]`.
fn scaled_coefficients(spline_weight: &Var, coefficients: &Var, nb: usize) -> Result<Var, DiffError> {
    let (n_out, n_in) = (spline_weight.shape()[0], spline_weight.shape()[1]);
    spline_weight
        .reshape(&[n_out * n_in])?
        .expand(1, nb)?
        .mul(&coefficients.reshape(&[n_out * n_in, nb])?)?
        .reshape(&[n_out, n_in * nb])
}

/// One KAN layer (as [`kan_layer_forward`]) together with its per-sample
/// Jacobian, input-major `[batch, n_in, n_out]`:
/// `J[b, in, o] = W_b[o, in] silu'(x[b, in]) + sum_i C[o, in, i] B_i'(x[b, in])`.
///
/// For a fixed input unit the Jacobian is the product of the `[batch, nb + 1]`
/// slope features with the transposed `[n_out, nb + 1]` edge weights, so the
/// whole layer is one batched matrix product over input units.
pub fn kan_layer_with_jacobian(
    input: &Var,
    base_weight: &Var,
    spline_weight: &Var,
    coefficients: &Var,
    spec: SplineSpec,
) -> Result<(Var, Var), DiffError> {
    let (n_out, n_in) = (base_weight.shape()[0], base_weight.shape()[1]);
    if input.shape().len() != 2 || input.shape()[1] != n_in {
        return Err(DiffError::ShapeMismatch {
            op: "kan_layer",
            lhs: input.shape().to_vec(),
            rhs: base_weight.shape().to_vec(),
        });
    }
    let batch = input.shape()[0];
    let nb = spec.num_basis();
    let (basis, slope) = SplineBasis::apply_with_slope(spec, input)?;
    let scaled = scaled_coefficients(spline_weight, coefficients, nb)?;
    let sig = input.sigmoid();
    let silu = input.mul(&sig)?;
    // silu' = s + silu (1 - s)
    let silu_slope = silu.mul(&sig.neg().add_scalar(1.0))?.add(&sig)?;

    let output = silu
        .matmul_t(base_weight, false, true)?
        .add(&basis.matmul_t(&scaled, false, true)?)?;

    // [batch, n_in, nb + 1] features against [n_out, n_in, nb + 1] weights,
    // one product per input unit, written straight into [batch, n_in, n_out]
    let features = Var::concat(
        &[slope.reshape(&[batch, n_in, nb])?, silu_slope.reshape(&[batch, n_in, 1])?],
        2,
    )?;
    let weights = Var::concat(
        &[scaled.reshape(&[n_out, n_in, nb])?, base_weight.reshape(&[n_out, n_in, 1])?],
        2,
    )?;
    let jacobian = features.bmm_permuted([1, 0, 2], &weights, [1, 2, 0], [1, 0, 2])?;
    Ok((output, jacobian))
}

impl Forecaster for KanParams {
    fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, KanLayerParams::n_in)
    }

    fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, KanLayerParams::n_out)
    }

    fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.base_weight, &l.spline_weight, &l.coefficients])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.base_weight, &mut l.spline_weight, &mut l.coefficients])
            .collect()
    }

    fn forward_with(&self, params: &[Var], input: &Var) -> Result<Var, DiffError> {
        let mut h = input.clone();
        for layer in params.chunks_exact(3) {
            h = kan_layer_forward(&h, &layer[0], &layer[1], &layer[2], self.spline)?;
        }
        Ok(h)
    }

    fn forward_jacobian_with(&self, params: &[Var], input: &Var) -> Result<(Var, Var), DiffError> {
        let mut h = input.clone();
        let mut jacobian: Option<Var> = None;
        for layer in params.chunks_exact(3) {
            let (out, local) = kan_layer_with_jacobian(&h, &layer[0], &layer[1], &layer[2], self.spline)?;
            jacobian = Some(match jacobian {
                Some(inner) => inner.bmm_t(&local, false, false)?,
                None => local,
            });
            h = out;
        }
        let jacobian = match jacobian {
            Some(j) => j,
            None => Var::constant(identity_jacobian(input.shape())),
        };
        Ok((h, jacobian))
    }

    fn count_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.n_out() * l.n_in() * (2 + self.spline.num_basis()))
            .sum()
    }
}
