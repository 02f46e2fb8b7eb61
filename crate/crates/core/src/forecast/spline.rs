//! Uniform-knot B-spline bases and their derivatives.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::diff::{grad_enabled, DiffError, Tensor, UnaryPrimitive, Var};

/// Highest supported spline degree.
pub const MAX_DEGREE: usize = 15;

/// Degree, interval count and range of a uniform B-spline grid.
///
/// The knot vector has `grid_size + 2 * degree + 1` uniformly spaced knots,
/// extending `degree` intervals beyond `[lo, hi]` on each side, which gives
/// `grid_size + degree` basis functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    pub grid_size: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self {
            degree: 3,
            grid_size: 5,
            lo: -2.0,
            hi: 2.0,
        }
    }
}

impl SplineSpec {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let ok = (1..=MAX_DEGREE).contains(&self.degree)
            && self.grid_size >= 2
            && self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi;
        if ok {
            Ok(())
        } else {
            Err(ForecastError::InvalidSpline(*self))
        }
    }

    /// Number of basis functions, `grid_size + degree`.
    pub fn num_basis(&self) -> usize {
        self.grid_size + self.degree
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.grid_size as f64
    }

    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.grid_size + 2 * self.degree + 1)
            .map(|j| self.lo + (j as f64 - self.degree as f64) * h)
            .collect()
    }

    /// Basis values at `x` (clamped to `[lo, hi]`) written into `out`.
    pub fn basis_into(&self, x: f64, out: &mut [f64]) {
        self.derivative_into(x, 0, out);
    }

    /// `order`-th derivative of every basis function at `x`.
    ///
    /// Inputs are clamped to `[lo, hi]`, so derivatives of order one and
    /// above vanish outside the range.
    pub fn derivative_into(&self, x: f64, order: usize, out: &mut [f64]) {
        let d = self.degree;
        debug_assert_eq!(out.len(), self.num_basis());
        out.fill(0.0);
        if order > d || (order > 0 && !(self.lo..=self.hi).contains(&x)) {
            return;
        }
        let x = x.clamp(self.lo, self.hi);
        let inv_h = self.grid_size as f64 / (self.hi - self.lo);

        // knot interval c (0-based over [lo, hi]) and position s in [0, 1] inside
        // it; x == hi lands at the start of the interval past the range
        let u = (x - self.lo) * inv_h;
        let c = (u as usize).min(self.grid_size);
        let s = u - c as f64;

        // v[order + k] holds basis c + k of the current degree. On uniform knots
        // the Cox-de Boor weights reduce to (s + q - k) / q and (k + 1 - s) / q.
        let target = d - order;
        let mut v = [0.0; MAX_DEGREE + 1];
        v[order] = 1.0;
        for q in 1..=target {
            let inv_q = 1.0 / q as f64;
            let mut left = 0.0;
            for k in 0..=q {
                let right = if k < q { v[order + k] } else { 0.0 };
                let kf = k as f64;
                v[order + k] = ((s + q as f64 - kf) * left + (kf + 1.0 - s) * right) * inv_q;
                left = right;
            }
        }
        // D B_{i,q} = (B_{i,q-1} - B_{i+1,q-1}) / h, applied `order` times
        for _ in 0..order {
            for k in 0..=d {
                let next = if k < d { v[k + 1] } else { 0.0 };
                v[k] = (v[k] - next) * inv_h;
            }
        }
        let nb = out.len();
        for (k, &value) in v[..=d].iter().enumerate() {
            if c + k < nb {
                out[c + k] = value;
            }
        }
    }

    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        self.basis_into(x, &mut out);
        out
    }
}

/// Graph primitive mapping `[..., n]` inputs to `[..., n * num_basis]`
/// basis (or basis-derivative) values, input-major.
pub(crate) struct SplineBasis {
    pub spec: SplineSpec,
    pub order: usize,
    /// Next-order basis at this node's input, shared by repeated backward
    /// passes. The flag records whether it was built with grad recording on.
    slope: RefCell<Option<(bool, Var)>>,
}

impl SplineBasis {
    fn new(spec: SplineSpec, order: usize) -> Self {
        Self {
            spec,
            order,
            slope: RefCell::new(None),
        }
    }

    pub fn apply(spec: SplineSpec, x: &Var) -> Result<Var, DiffError> {
        x.apply(Rc::new(Self::new(spec, 0)))
    }

    /// Basis values and their first derivatives at `x`. The derivative node
    /// is also the one the basis node uses in its own backward pass.
    pub fn apply_with_slope(spec: SplineSpec, x: &Var) -> Result<(Var, Var), DiffError> {
        let primitive = Rc::new(Self::new(spec, 0));
        let basis = x.apply(primitive.clone())?;
        let slope = primitive.slope(x)?;
        Ok((basis, slope))
    }

    fn slope(&self, input: &Var) -> Result<Var, DiffError> {
        let recording = grad_enabled();
        if let Some((recorded, slope)) = &*self.slope.borrow() {
            if *recorded || !recording {
                return Ok(slope.clone());
            }
        }
        let slope = input.apply(Rc::new(Self::new(self.spec, self.order + 1)))?;
        *self.slope.borrow_mut() = Some((recording, slope.clone()));
        Ok(slope)
    }
}

impl UnaryPrimitive for SplineBasis {
    fn name(&self) -> &'static str {
        "spline_basis"
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor, DiffError> {
        let nb = self.spec.num_basis();
        let mut data = vec![0.0; input.numel() * nb];
        for (x, out) in input.data().iter().zip(data.chunks_exact_mut(nb)) {
            self.spec.derivative_into(*x, self.order, out);
        }
        let mut shape = input.shape().to_vec();
        match shape.last_mut() {
            Some(last) => *last *= nb,
            None => shape.push(nb),
        }
        Tensor::new(shape, data)
    }

    fn backward(&self, input: &Var, _output: &Var, grad: &Var) -> Result<Var, DiffError> {
        if self.order >= self.spec.degree {
            return Ok(Var::constant(Tensor::zeros(input.shape())));
        }
        let slope = self.slope(input)?;
        let rank = input.shape().len();
        let flat = grad.group_dot(&slope, self.spec.num_basis())?;
        if rank == 0 {
            flat.reshape(&[])
        } else {
            Ok(flat)
        }
    }
}
