//! Lorenz-96: `dx_i/dt = -x_{i-1} (x_{i-2} - x_{i+1}) - x_i + F`, cyclic in `i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AdjacencyTruth, DataError, TimeSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lorenz96Config {
    pub p: usize,
    pub forcing: f64,
    /// Number of recorded samples.
    pub t: usize,
    /// Sampling interval.
    pub dt: f64,
    /// RK4 steps of `dt / substeps` per sample; large forcing needs more
    /// than one at `dt = 0.05`.
    pub substeps: usize,
    /// Samples discarded before recording.
    pub burn_in: usize,
    pub seed: u64,
    pub obs_noise_sigma: f64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Self {
            p: 10,
            forcing: 10.0,
            t: 1000,
            dt: 0.05,
            substeps: 1,
            burn_in: 1000,
            seed: 0,
            obs_noise_sigma: 0.0,
        }
    }
}

impl Lorenz96Config {
    pub fn validate(&self) -> Result<(), DataError> {
        let problem = if self.p < 4 {
            Some("p must be at least 4")
        } else if !(self.dt > 0.0 && self.dt.is_finite()) {
            Some("dt must be positive")
        } else if self.substeps == 0 {
            Some("substeps must be at least 1")
        } else if !(self.forcing > 0.0 && self.forcing.is_finite()) {
            Some("forcing must be positive")
        } else if self.t < 2 {
            Some("t must be at least 2")
        } else if !(self.obs_noise_sigma >= 0.0) {
            Some("obs_noise_sigma must be non-negative")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(DataError::InvalidConfig(msg.to_string())),
            None => Ok(()),
        }
    }
}

pub fn lorenz96_derivative(x: &[f64], forcing: f64, out: &mut [f64]) {
    let p = x.len();
    for i in 0..p {
        let im1 = x[(i + p - 1) % p];
        let im2 = x[(i + p - 2) % p];
        let ip1 = x[(i + 1) % p];
        out[i] = -im1 * (im2 - ip1) - x[i] + forcing;
    }
}

/// One classical fourth-order Runge-Kutta step, in place.
pub fn rk4_step(x: &mut [f64], forcing: f64, dt: f64) {
    let p = x.len();
    let mut k1 = vec![0.0; p];
    let mut k2 = vec![0.0; p];
    let mut k3 = vec![0.0; p];
    let mut k4 = vec![0.0; p];
    let mut tmp = vec![0.0; p];
    lorenz96_derivative(x, forcing, &mut k1);
    for i in 0..p {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k2);
    for i in 0..p {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k3);
    for i in 0..p {
        tmp[i] = x[i] + dt * k3[i];
    }
    lorenz96_derivative(&tmp, forcing, &mut k4);
    for i in 0..p {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates from `x0` for `steps` RK4 steps, returning every visited state
/// including `x0`.
pub fn integrate_lorenz96(x0: &[f64], forcing: f64, dt: f64, steps: usize) -> Result<Vec<Vec<f64>>, DataError> {
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for step in 1..=steps {
        rk4_step(&mut x, forcing, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DataError::BlowUp { step });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Stencil truth: `i` is driven by `i-2, i-1, i, i+1` (mod p).
pub fn lorenz96_truth(p: usize) -> AdjacencyTruth {
    let mut truth = AdjacencyTruth::empty(p, true);
    for i in 0..p {
        for off in [p - 2, p - 1, 0, 1] {
            truth.set(i, (i + off) % p, true);
        }
    }
    truth
}

pub fn simulate_lorenz96(cfg: &Lorenz96Config) -> Result<(TimeSeries, AdjacencyTruth), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let perturb = Normal::new(0.0, 0.01).expect("valid std");
    let mut x: Vec<f64> = (0..cfg.p).map(|_| cfg.forcing + perturb.sample(&mut rng)).collect();

    let h = cfg.dt / cfg.substeps as f64;
    let advance = |x: &mut Vec<f64>, step: usize| {
        for _ in 0..cfg.substeps {
            rk4_step(x, cfg.forcing, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DataError::BlowUp { step });
        }
        Ok(())
    };
    for step in 1..=cfg.burn_in {
        advance(&mut x, step)?;
    }
    let mut values = Vec::with_capacity(cfg.t * cfg.p);
    for n in 0..cfg.t {
        values.extend_from_slice(&x);
        if n + 1 < cfg.t {
            advance(&mut x, cfg.burn_in + n + 1)?;
        }
    }
    if cfg.obs_noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.obs_noise_sigma).expect("valid std");
        for v in &mut values {
            *v += noise.sample(&mut rng);
        }
    }
    Ok((TimeSeries::new(cfg.t, cfg.p, values)?, lorenz96_truth(cfg.p)))
}
