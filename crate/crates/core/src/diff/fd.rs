//! Central finite differences, used as an independent gradient oracle.

use super::DiffError;

/// Central-difference estimate of the gradient of `f` at `at`:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_difference<F>(mut f: F, at: &[f64], step: f64) -> Result<Vec<f64>, DiffError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(DiffError::InvalidStep(step));
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x);
        x[i] = orig - step;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(DiffError::NonFinite { index: i });
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Largest relative error between two gradient vectors, with `floor`
/// guarding the denominator near zero.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::var::sigmoid;

    #[test]
    fn square_at_three() {
        let g = finite_difference(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_is_zero() {
        let g = finite_difference(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn silu_sum() {
        let silu = |x: f64| x * sigmoid(x);
        let g = finite_difference(|x| x.iter().map(|&v| silu(v)).sum(), &[0.0, 1.0], 1e-5).unwrap();
        // analytic: s(x)(1 + x(1 - s(x)))
        let s1 = sigmoid(1.0);
        assert!((g[0] - 0.5).abs() < 1e-9);
        assert!((g[1] - s1 * (1.0 + (1.0 - s1))).abs() < 1e-9);
        assert!((g[1] - 0.9277).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        assert!(matches!(
            finite_difference(|x| x[0], &[1.0], 0.0),
            Err(DiffError::InvalidStep(_))
        ));
        assert!(matches!(
            finite_difference(|x| (x[0] - 1.0).ln(), &[1.0], 1e-5),
            Err(DiffError::NonFinite { index: 0 })
        ));
    }
}
