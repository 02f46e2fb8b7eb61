use serde::{Deserialize, Serialize};

use super::DataError;
use crate::diff::Tensor;

/// A `T x p` matrix of observations, rows = time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    len: usize,
    dim: usize,
    names: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(len: usize, dim: usize, values: Vec<f64>) -> Result<Self, DataError> {
        if len < 2 || dim == 0 {
            return Err(DataError::TooShort { len, dim });
        }
        if values.len() != len * dim {
            return Err(DataError::Shape {
                expected: len * dim,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                row: pos / dim,
                column: pos % dim,
            });
        }
        Ok(Self {
            values,
            len,
            dim,
            names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(row) = rows.iter().position(|r| r.len() != dim) {
            return Err(DataError::Ragged {
                line: row + 1,
                expected: dim,
                got: rows[row].len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.dim {
            return Err(DataError::Shape {
                expected: self.dim,
                got: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of variables `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Column labels, falling back to `x0, x1, ...`.
    pub fn column_names(&self) -> Vec<String> {
        self.names
            .clone()
            .unwrap_or_else(|| (0..self.dim).map(|i| format!("x{i}")).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.values[t * self.dim + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.get(t, i)).collect()
    }

    /// Rows `start..end` as a new series.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self, DataError> {
        let mut s = Self::new(end - start, self.dim, self.values[start * self.dim..end * self.dim].to_vec())?;
        s.names = self.names.clone();
        Ok(s)
    }
}

/// Ground-truth adjacency. Entry `(target, source)` is true when `source`
/// causes `target`; rows are targets, matching the score matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyTruth {
    dim: usize,
    edges: Vec<bool>,
    /// Whether the diagonal carries meaningful self-causation labels.
    pub include_self: bool,
}

impl AdjacencyTruth {
    pub fn new(dim: usize, edges: Vec<bool>, include_self: bool) -> Result<Self, DataError> {
        if edges.len() != dim * dim {
            return Err(DataError::Shape {
                expected: dim * dim,
                got: edges.len(),
            });
        }
        Ok(Self {
            dim,
            edges,
            include_self,
        })
    }

    pub fn empty(dim: usize, include_self: bool) -> Self {
        Self {
            dim,
            edges: vec![false; dim * dim],
            include_self,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, target: usize, source: usize) -> bool {
        self.edges[target * self.dim + source]
    }

    pub fn set(&mut self, target: usize, source: usize, value: bool) {
        self.edges[target * self.dim + source] = value;
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    /// Sources of `target`, ascending.
    pub fn parents(&self, target: usize) -> Vec<usize> {
        (0..self.dim).filter(|&s| self.get(target, s)).collect()
    }
}

/// Sliding windows over a series: `inputs[n]` holds rows `n..n+k` flattened
/// lag-major (all variables at the oldest lag first), `targets[n]` is row
/// `n + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `[N, k * p]`
    pub inputs: Tensor,
    /// `[N, p]`
    pub targets: Tensor,
    pub lag: usize,
    pub dim: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `start..end` as a new dataset.
    pub fn subset(&self, start: usize, end: usize) -> Self {
        Self {
            inputs: self.inputs.slice_axis(0, start, end).expect("range within dataset"),
            targets: self.targets.slice_axis(0, start, end).expect("range within dataset"),
            lag: self.lag,
            dim: self.dim,
        }
    }

    /// Samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let width = self.lag * self.dim;
        let mut inputs = Vec::with_capacity(indices.len() * width);
        let mut targets = Vec::with_capacity(indices.len() * self.dim);
        for &n in indices {
            inputs.extend_from_slice(&self.inputs.data()[n * width..(n + 1) * width]);
            targets.extend_from_slice(&self.targets.data()[n * self.dim..(n + 1) * self.dim]);
        }
        Self {
            inputs: Tensor::new(vec![indices.len(), width], inputs).expect("length matches"),
            targets: Tensor::new(vec![indices.len(), self.dim], targets).expect("length matches"),
            lag: self.lag,
            dim: self.dim,
        }
    }

    /// Unflattens `inputs[n]` back into `k` rows of `p` values.
    pub fn window_rows(&self, n: usize) -> Vec<Vec<f64>> {
        let width = self.lag * self.dim;
        self.inputs.data()[n * width..(n + 1) * width]
            .chunks_exact(self.dim)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

pub fn make_windows(series: &TimeSeries, lag: usize) -> Result<WindowedDataset, DataError> {
    if lag == 0 || series.len() <= lag {
        return Err(DataError::LagTooLarge {
            lag,
            len: series.len(),
        });
    }
    let p = series.dim();
    let n = series.len() - lag;
    let mut inputs = Vec::with_capacity(n * lag * p);
    let mut targets = Vec::with_capacity(n * p);
    for t in lag..series.len() {
        inputs.extend_from_slice(&series.values()[(t - lag) * p..t * p]);
        targets.extend_from_slice(series.row(t));
    }
    Ok(WindowedDataset {
        inputs: Tensor::new(vec![n, lag * p], inputs).expect("length matches"),
        targets: Tensor::new(vec![n, p], targets).expect("length matches"),
        lag,
        dim: p,
    })
}

/// Per-variable mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn invert(&self, series: &TimeSeries) -> TimeSeries {
        let p = series.dim();
        let values = series
            .values()
            .iter()
            .enumerate()
            .map(|(idx, &v)| v * self.std[idx % p] + self.mean[idx % p])
            .collect();
        let mut out = TimeSeries::new(series.len(), p, values).expect("finite values");
        out.names = series.names.clone();
        out
    }
}

/// Z-scores every column (population convention, divide by `T`).
pub fn standardize(series: &TimeSeries) -> Result<(TimeSeries, Standardization), DataError> {
    let (t, p) = (series.len(), series.dim());
    let mut mean = vec![0.0; p];
    let mut std = vec![0.0; p];
    for i in 0..p {
        let col = series.column(i);
        let m = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64;
        if var <= 0.0 {
            let name = series.column_names()[i].clone();
            return Err(DataError::ZeroVariance { column: i, name });
        }
        mean[i] = m;
        std[i] = var.sqrt();
    }
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &v)| (v - mean[idx % p]) / std[idx % p])
        .collect();
    let mut out = TimeSeries::new(t, p, values)?;
    out.names = series.names.clone();
    Ok((out, Standardization { mean, std }))
}
