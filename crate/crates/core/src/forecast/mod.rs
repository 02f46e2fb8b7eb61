//! Forecasting backbones mapping a flattened lag window (`k * p` values) to
//! a `p`-vector prediction.

mod kan;
mod mlp;
pub mod spline;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{no_grad, DiffError, Tensor, Var};

pub use kan::{kan_layer_forward, kan_layer_with_jacobian, KanLayerParams, KanParams};
pub use mlp::{Activation, DenseLayerParams, MlpParams};
pub use spline::SplineSpec;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid spline spec {0:?}: need degree >= 1, grid_size >= 2, lo < hi")]
    InvalidSpline(SplineSpec),
    #[error("invalid layer sizes {0:?}: need at least two positive sizes")]
    InvalidSizes(Vec<usize>),
    #[error("input has {got} features, backbone expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter {index} has {got} values, expected {expected}")]
    ParamLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} parameter arrays, found {got}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed parameter file {path}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// The interface every backbone implements. Parameters are exposed as a
/// flat list of tensors in declaration order; `forward_with` consumes graph
/// nodes bound to those tensors in the same order.
pub trait Forecaster {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn forward_with(&self, params: &[Var], input: &Var) -> Result<Var, DiffError>;
    /// Prediction `[batch, n_out]` together with the per-sample input
    /// Jacobian, input-major `[batch, n_in, n_out]`, both differentiable in
    /// `params`.
    fn forward_jacobian_with(&self, params: &[Var], input: &Var) -> Result<(Var, Var), DiffError>;
    fn count_parameters(&self) -> usize;
}

/// `[batch, n, n]` stack of identity matrices for an input of shape `[batch, n]`.
fn identity_jacobian(shape: &[usize]) -> Tensor {
    let (batch, n) = (shape[0], shape[1]);
    let mut data = vec![0.0; batch * n * n];
    for b in 0..batch {
        for i in 0..n {
            data[(b * n + i) * n + i] = 1.0;
        }
    }
    Tensor::new(vec![batch, n, n], data).expect("sized to fit")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    #[default]
    Kan,
    Mlp,
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Kan => "kan",
            BackboneKind::Mlp => "mlp",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Kan(KanParams),
    Mlp(MlpParams),
}

/// A forecaster plus the metadata needed to rebuild it.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub sizes: Vec<usize>,
    pub spline: SplineSpec,
    pub seed: u64,
    pub params: Params,
}

fn check_sizes(sizes: &[usize]) -> Result<(), ForecastError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(ForecastError::InvalidSizes(sizes.to_vec()));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

impl Backbone {
    /// Seeded initialization.
    ///
    /// KAN: base weights uniform in `±1/sqrt(n_in)`, spline weights 1, spline
    /// coefficients normal with standard deviation `0.1 / (grid_size + degree)`.
    /// MLP: weights uniform in `±1/sqrt(n_in)`, biases 0, SiLU hidden activation.
    pub fn init(
        kind: BackboneKind,
        sizes: &[usize],
        spline: SplineSpec,
        seed: u64,
    ) -> Result<Self, ForecastError> {
        check_sizes(sizes)?;
        spline.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = match kind {
            BackboneKind::Kan => {
                let nb = spline.num_basis();
                let noise = Normal::new(0.0, 0.1 / nb as f64).expect("positive std");
                let layers = sizes
                    .windows(2)
                    .map(|w| {
                        let (n_in, n_out) = (w[0], w[1]);
                        let base_weight = uniform(&mut rng, &[n_out, n_in], 1.0 / (n_in as f64).sqrt());
                        let coeffs = (0..n_out * n_in * nb).map(|_| noise.sample(&mut rng)).collect();
                        KanLayerParams {
                            base_weight,
                            spline_weight: Tensor::ones(&[n_out, n_in]),
                            coefficients: Tensor::new(vec![n_out, n_in, nb], coeffs)
                                .expect("length matches shape"),
                        }
                    })
                    .collect();
                Params::Kan(KanParams { spline, layers })
            }
            BackboneKind::Mlp => {
                let layers = sizes
                    .windows(2)
                    .map(|w| DenseLayerParams {
                        weight: uniform(&mut rng, &[w[1], w[0]], 1.0 / (w[0] as f64).sqrt()),
                        bias: Tensor::zeros(&[w[1]]),
                    })
                    .collect();
                Params::Mlp(MlpParams {
                    layers,
                    activation: Activation::Silu,
                })
            }
        };
        Ok(Self {
            kind,
            sizes: sizes.to_vec(),
            spline,
            seed,
            params,
        })
    }

    /// A single linear layer `x -> W x + b`, i.e. an MLP without hidden layers.
    pub fn linear(weight: Tensor, bias: Tensor) -> Result<Self, ForecastError> {
        let shape = weight.shape().to_vec();
        if shape.len() != 2 || bias.shape() != [shape[0]] {
            return Err(DiffError::ShapeMismatch {
                op: "linear",
                lhs: shape,
                rhs: bias.shape().to_vec(),
            }
            .into());
        }
        Ok(Self {
            kind: BackboneKind::Mlp,
            sizes: vec![shape[1], shape[0]],
            spline: SplineSpec::default(),
            seed: 0,
            params: Params::Mlp(MlpParams {
                layers: vec![DenseLayerParams { weight, bias }],
                activation: Activation::Silu,
            }),
        })
    }

    fn forecaster(&self) -> &dyn Forecaster {
        match &self.params {
            Params::Kan(p) => p,
            Params::Mlp(p) => p,
        }
    }

    fn forecaster_mut(&mut self) -> &mut dyn Forecaster {
        match &mut self.params {
            Params::Kan(p) => p,
            Params::Mlp(p) => p,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forecaster().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forecaster().output_dim()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.forecaster().tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.forecaster_mut().tensors_mut()
    }

    /// Exact number of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        self.forecaster().count_parameters()
    }

    /// Graph leaves for every parameter tensor, gradients enabled.
    pub fn bind(&self) -> Vec<Var> {
        self.tensors().into_iter().map(|t| Var::param(t.clone())).collect()
    }

    /// Graph leaves for every parameter tensor, treated as constants.
    pub fn bind_frozen(&self) -> Vec<Var> {
        self.tensors().into_iter().map(|t| Var::constant(t.clone())).collect()
    }

    /// Forward pass on graph nodes; `params` must come from [`Backbone::bind`]
    /// or [`Backbone::bind_frozen`].
    pub fn forward_with(&self, params: &[Var], window: &Var) -> Result<Var, ForecastError> {
        let got = window.shape().get(1).copied().unwrap_or(0);
        if window.shape().len() != 2 || got != self.input_dim() {
            return Err(ForecastError::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(self.forecaster().forward_with(params, window)?)
    }

    /// Forward pass plus the per-sample Jacobian of the outputs with respect
    /// to the window, input-major: entry `[n, in, j]` is
    /// `d prediction[n, j] / d window[n, in]`, shape `[batch, k * p, p]`.
    pub fn forward_jacobian_with(&self, params: &[Var], window: &Var) -> Result<(Var, Var), ForecastError> {
        let got = window.shape().get(1).copied().unwrap_or(0);
        if window.shape().len() != 2 || got != self.input_dim() {
            return Err(ForecastError::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(self.forecaster().forward_jacobian_with(params, window)?)
    }

    /// Plain prediction for a `[batch, k * p]` window, no graph retained.
    pub fn forward(&self, window: &Tensor) -> Result<Tensor, ForecastError> {
        no_grad(|| {
            let out = self.forward_with(&self.bind_frozen(), &Var::constant(window.clone()))?;
            Ok(out.value().clone())
        })
    }

    /// Copies new values into the parameters, preserving shapes.
    pub fn set_tensors(&mut self, values: &[Tensor]) -> Result<(), ForecastError> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() {
            return Err(ForecastError::ParamCount {
                expected: slots.len(),
                got: values.len(),
            });
        }
        for (index, (slot, v)) in slots.iter_mut().zip(values).enumerate() {
            if slot.shape() != v.shape() {
                return Err(ForecastError::ParamLength {
                    index,
                    expected: slot.numel(),
                    got: v.numel(),
                });
            }
            **slot = v.clone();
        }
        Ok(())
    }

    pub fn to_file(&self) -> ParamFile {
        ParamFile {
            kind: self.kind,
            sizes: self.sizes.clone(),
            spline: self.spline,
            seed: self.seed,
            params: self.tensors().into_iter().map(|t| t.data().to_vec()).collect(),
        }
    }

    pub fn from_file(file: &ParamFile) -> Result<Self, ForecastError> {
        let mut backbone = Self::init(file.kind, &file.sizes, file.spline, file.seed)?;
        let shapes: Vec<Vec<usize>> = backbone.tensors().iter().map(|t| t.shape().to_vec()).collect();
        if shapes.len() != file.params.len() {
            return Err(ForecastError::ParamCount {
                expected: shapes.len(),
                got: file.params.len(),
            });
        }
        let mut values = Vec::with_capacity(shapes.len());
        for (index, (shape, data)) in shapes.into_iter().zip(&file.params).enumerate() {
            let expected: usize = shape.iter().product();
            if data.len() != expected {
                return Err(ForecastError::ParamLength {
                    index,
                    expected,
                    got: data.len(),
                });
            }
            values.push(Tensor::new(shape, data.clone())?);
        }
        backbone.set_tensors(&values)?;
        Ok(backbone)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), ForecastError> {
        let text = serde_json::to_string(&self.to_file()).map_err(|source| ForecastError::Json {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(path, text).map_err(|source| ForecastError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self, ForecastError> {
        let text = fs::read_to_string(path).map_err(|source| ForecastError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ParamFile = serde_json::from_str(&text).map_err(|source| ForecastError::Json {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_file(&file)
    }
}

/// On-disk parameter document: a header followed by flat parameter arrays
/// in declaration order (KAN: base weight, spline weight, coefficients per
/// layer; MLP: weight, bias per layer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub kind: BackboneKind,
    pub sizes: Vec<usize>,
    pub spline: SplineSpec,
    pub seed: u64,
    pub params: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_shapes() {
        let b = Backbone::init(BackboneKind::Kan, &[4, 8, 2], SplineSpec::default(), 1).unwrap();
        let shapes: Vec<&[usize]> = b.tensors().iter().map(|t| t.shape()).collect();
        assert_eq!(shapes[2], &[8, 4, 8]);
        assert_eq!(shapes[5], &[2, 8, 8]);
    }

    #[test]
    fn seeded_init() {
        let spec = SplineSpec::default();
        for kind in [BackboneKind::Kan, BackboneKind::Mlp] {
            let a = Backbone::init(kind, &[4, 8, 2], spec, 5).unwrap();
            let b = Backbone::init(kind, &[4, 8, 2], spec, 5).unwrap();
            let c = Backbone::init(kind, &[4, 8, 2], spec, 6).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.tensors()[0], c.tensors()[0]);
        }
    }

    #[test]
    fn parameter_counts() {
        let spec = SplineSpec::default();
        let mlp = Backbone::init(BackboneKind::Mlp, &[4, 8, 2], spec, 0).unwrap();
        assert_eq!(mlp.count_parameters(), 58);
        let kan = Backbone::init(BackboneKind::Kan, &[4, 2], spec, 0).unwrap();
        assert_eq!(kan.count_parameters(), 80);
        let total: usize = kan.tensors().iter().map(|t| t.numel()).sum();
        assert_eq!(total, 80);
    }

    #[test]
    fn rejects_bad_sizes_and_dims() {
        let spec = SplineSpec::default();
        assert!(Backbone::init(BackboneKind::Kan, &[4], spec, 0).is_err());
        assert!(Backbone::init(BackboneKind::Mlp, &[4, 0, 2], spec, 0).is_err());
        let b = Backbone::init(BackboneKind::Kan, &[4, 2], spec, 0).unwrap();
        assert!(matches!(
            b.forward(&Tensor::zeros(&[1, 3])),
            Err(ForecastError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn zero_weights_zero_window() {
        let spec = SplineSpec::default();
        let mut b = Backbone::init(BackboneKind::Kan, &[6, 3], spec, 2).unwrap();
        for t in b.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let out = b.forward(&Tensor::zeros(&[1, 6])).unwrap();
        assert_eq!(out.shape(), &[1, 3]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let b = Backbone::init(BackboneKind::Kan, &[3, 4, 2], SplineSpec::default(), 9).unwrap();
        b.save_json(&path).unwrap();
        assert_eq!(Backbone::load_json(&path).unwrap(), b);
    }
}
