use serde::{Deserialize, Serialize};

use super::{identity_jacobian, Forecaster};
use crate::diff::{DiffError, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, x: &Var) -> Var {
        match self {
            Activation::Silu => x.silu(),
            Activation::Identity => x.clone(),
        }
    }

    /// Elementwise derivative; `None` when it is identically one.
    fn slope(self, x: &Var) -> Result<Option<Var>, DiffError> {
        match self {
            Activation::Silu => {
                let s = x.sigmoid();
                Ok(Some(x.mul(&s)?.mul(&s.neg().add_scalar(1.0))?.add(&s)?))
            }
            Activation::Identity => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayerParams {
    /// `[n_out, n_in]`
    pub weight: Tensor,
    /// `[n_out]`
    pub bias: Tensor,
}

/// Dense layers with a hidden activation; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayerParams>,
    pub activation: Activation,
}

impl Forecaster for MlpParams {
    fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.shape()[1])
    }

    fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.shape()[0])
    }

    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn forward_with(&self, params: &[Var], input: &Var) -> Result<Var, DiffError> {
        let batch = input.shape()[0];
        let n_layers = params.len() / 2;
        let mut h = input.clone();
        for (idx, layer) in params.chunks_exact(2).enumerate() {
            let bias = layer[1].expand(0, batch)?;
            h = h.matmul_t(&layer[0], false, true)?.add(&bias)?;
            if idx + 1 < n_layers {
                h = self.activation.apply(&h);
            }
        }
        Ok(h)
    }

    fn forward_jacobian_with(&self, params: &[Var], input: &Var) -> Result<(Var, Var), DiffError> {
        let batch = input.shape()[0];
        let n_layers = params.len() / 2;
        if n_layers == 0 {
            return Ok((input.clone(), Var::constant(identity_jacobian(input.shape()))));
        }
        let mut h = input.clone();
        let mut slopes = Vec::with_capacity(n_layers - 1);
        for (idx, layer) in params.chunks_exact(2).enumerate() {
            let bias = layer[1].expand(0, batch)?;
            h = h.matmul_t(&layer[0], false, true)?.add(&bias)?;
            if idx + 1 < n_layers {
                slopes.push(self.activation.slope(&h)?);
                h = self.activation.apply(&h);
            }
        }
        // accumulate W_L diag(a'_{L-1}) W_{L-1} ... from the output side
        let weights: Vec<&Var> = params.iter().step_by(2).collect();
        let n_out = weights[n_layers - 1].shape()[0];
        let mut acc = weights[n_layers - 1].expand(0, batch)?;
        for idx in (0..n_layers - 1).rev() {
            let width = weights[idx].shape()[0];
            if let Some(slope) = &slopes[idx] {
                acc = acc.mul(&slope.expand(1, n_out)?)?;
            }
            acc = acc
                .reshape(&[batch * n_out, width])?
                .matmul(weights[idx])?
                .reshape(&[batch, n_out, weights[idx].shape()[1]])?;
        }
        Ok((h, acc.permute(&[0, 2, 1])?))
    }

    fn count_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.numel() + l.bias.numel()).sum()
    }
}
