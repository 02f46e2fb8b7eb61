//! Stationary linear vector autoregressions with known support.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AdjacencyTruth, DataError, TimeSeries};

/// Lag-indexed coefficient matrices: `x_t = sum_l A_l x_{t-l} + e_t`.
/// `matrices[l]` is `A_{l+1}`, row-major `p x p`, row = target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarCoefficients {
    pub dim: usize,
    pub matrices: Vec<Vec<f64>>,
}

impl VarCoefficients {
    pub fn new(dim: usize, matrices: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if dim == 0 || matrices.is_empty() {
            return Err(DataError::InvalidConfig("VAR needs p >= 1 and at least one lag".into()));
        }
        for m in &matrices {
            if m.len() != dim * dim {
                return Err(DataError::Shape {
                    expected: dim * dim,
                    got: m.len(),
                });
            }
        }
        Ok(Self { dim, matrices })
    }

    pub fn lags(&self) -> usize {
        self.matrices.len()
    }

    pub fn get(&self, lag: usize, target: usize, source: usize) -> f64 {
        self.matrices[lag - 1][target * self.dim + source]
    }

    /// Spectral radius of the companion matrix; below one means stationary.
    pub fn spectral_radius(&self) -> f64 {
        let (p, l) = (self.dim, self.lags());
        let n = p * l;
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for (lag, m) in self.matrices.iter().enumerate() {
            for r in 0..p {
                for c in 0..p {
                    companion[(r, lag * p + c)] = m[r * p + c];
                }
            }
        }
        for i in p..n {
            companion[(i, i - p)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Truth `(j, i)` set iff some lag has a nonzero `A_l[j, i]`.
    pub fn support(&self) -> AdjacencyTruth {
        let p = self.dim;
        let mut truth = AdjacencyTruth::empty(p, true);
        for m in &self.matrices {
            for (idx, &v) in m.iter().enumerate() {
                if v != 0.0 {
                    truth.set(idx / p, idx % p, true);
                }
            }
        }
        truth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarConfig {
    pub t: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Steps simulated from a zero start and discarded.
    pub burn_in: usize,
    /// Explicit starting rows `x_0 .. x_{L-1}`; when set they are emitted as
    /// the first rows and no burn-in is run.
    pub initial: Option<Vec<Vec<f64>>>,
}

impl Default for VarConfig {
    fn default() -> Self {
        Self {
            t: 2000,
            noise_sigma: 1.0,
            seed: 0,
            burn_in: 100,
            initial: None,
        }
    }
}

pub fn simulate_var(coeffs: &VarCoefficients, cfg: &VarConfig) -> Result<(TimeSeries, AdjacencyTruth), DataError> {
    let radius = coeffs.spectral_radius();
    if !(radius < 1.0) {
        return Err(DataError::Unstable { spectral_radius: radius });
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(DataError::InvalidConfig("noise_sigma must be non-negative".into()));
    }
    let (p, lags) = (coeffs.dim, coeffs.lags());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid std");
    let draw = |rng: &mut ChaCha8Rng| if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };

    let (mut rows, skip): (Vec<Vec<f64>>, usize) = match &cfg.initial {
        Some(init) => {
            if init.len() != lags || init.iter().any(|r| r.len() != p) {
                return Err(DataError::InvalidConfig(format!(
                    "initial must hold {lags} rows of {p} values"
                )));
            }
            (init.clone(), 0)
        }
        None => (vec![vec![0.0; p]; lags], cfg.burn_in + lags),
    };
    let total = skip + cfg.t;
    while rows.len() < total {
        let t = rows.len();
        let mut next = vec![0.0; p];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for lag in 1..=lags {
                let prev = &rows[t - lag];
                for (i, &v) in prev.iter().enumerate() {
                    acc += coeffs.get(lag, j, i) * v;
                }
            }
            *slot = acc + draw(&mut rng);
        }
        rows.push(next);
    }
    let series = TimeSeries::from_rows(&rows[skip..skip + cfg.t])?;
    Ok((series, coeffs.support()))
}

/// A random sparse VAR(1): every diagonal entry plus each off-diagonal entry
/// with probability `density` gets a coefficient of magnitude in
/// `[0.3, 0.6]` and random sign; the matrix is rescaled to spectral radius
/// 0.8 if it would otherwise exceed it.
pub fn random_sparse_var(p: usize, density: f64, seed: u64) -> Result<VarCoefficients, DataError> {
    if p == 0 || !(0.0..=1.0).contains(&density) {
        return Err(DataError::InvalidConfig("need p >= 1 and density in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![0.0; p * p];
    for j in 0..p {
        for i in 0..p {
            if i == j || rng.random_bool(density) {
                let mag = rng.random_range(0.3..=0.6);
                m[j * p + i] = if rng.random_bool(0.5) { mag } else { -mag };
            }
        }
    }
    let mut coeffs = VarCoefficients::new(p, vec![m])?;
    let radius = coeffs.spectral_radius();
    if radius > 0.8 {
        let s = 0.8 / radius;
        coeffs.matrices[0].iter_mut().for_each(|v| *v *= s);
    }
    Ok(coeffs)
}
