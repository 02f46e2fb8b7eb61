use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_matrix, save_matrix, DataError};

/// Non-negative `p x p` causal scores. Entry `(j, i)` scores the edge
/// `i -> j` ("series i Granger-causes series j"); rows are targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GcMatrixRepr", try_from = "GcMatrixRepr")]
pub struct GcMatrix {
    dim: usize,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GcMatrixRepr {
    dim: usize,
    scores: Vec<Vec<f64>>,
}

impl From<GcMatrix> for GcMatrixRepr {
    fn from(m: GcMatrix) -> Self {
        Self {
            dim: m.dim,
            scores: m.scores.chunks_exact(m.dim.max(1)).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl TryFrom<GcMatrixRepr> for GcMatrix {
    type Error = String;

    fn try_from(r: GcMatrixRepr) -> Result<Self, Self::Error> {
        if r.scores.len() != r.dim || r.scores.iter().any(|row| row.len() != r.dim) {
            return Err(format!("scores must be {0}x{0}", r.dim));
        }
        GcMatrix::new(r.dim, r.scores.concat()).map_err(|e| e.to_string())
    }
}

impl GcMatrix {
    pub fn new(dim: usize, scores: Vec<f64>) -> Result<Self, DataError> {
        if scores.len() != dim * dim {
            return Err(DataError::Shape {
                expected: dim * dim,
                got: scores.len(),
            });
        }
        if let Some(pos) = scores.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DataError::InvalidConfig(format!(
                "score ({}, {}) = {} is not a finite non-negative number",
                pos / dim,
                pos % dim,
                scores[pos]
            )));
        }
        Ok(Self { dim, scores })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let dim = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != dim) {
            return Err(DataError::NotSquare {
                rows: dim,
                cols: row.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            scores: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Score of the edge `source -> target`.
    pub fn get(&self, target: usize, source: usize) -> f64 {
        self.scores[target * self.dim + source]
    }

    pub fn row(&self, target: usize) -> &[f64] {
        &self.scores[target * self.dim..(target + 1) * self.dim]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Writes `p` lines of `p` comma-separated scores, row = target.
    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        save_matrix(&self.scores, self.dim, path)
    }

    pub fn load_csv(path: &Path) -> Result<Self, DataError> {
        let (dim, values) = load_matrix(path)?;
        Self::new(dim, values)
    }
}
