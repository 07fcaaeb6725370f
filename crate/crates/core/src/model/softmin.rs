//! Log-sum-exp smoothing of the coordinate minimum and its gradient.
//!
//! All evaluations subtract `min(y)` before exponentiating, so the largest
//! exponent is exactly `exp(0) = 1` and ratios `y/ε` of order 1e6 neither
//! overflow nor lose the minimizing coordinate.

use crate::error::{Error, Result};

/// Tolerance used when checking that a vector lies in the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Smooth minimum `-ε log Σ_j exp(-y_j/ε)`.
pub fn softmin(y: &[f64], epsilon: f64) -> Result<f64> {
    check_args(y, epsilon)?;
    let lo = min_of(y);
    let s: f64 = y.iter().map(|&v| (-(v - lo) / epsilon).exp()).sum();
    Ok(lo - epsilon * s.ln())
}

/// Softmax weights on `-y/ε`; the gradient of [`softmin`].
pub fn softmin_fractions(y: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_args(y, epsilon)?;
    let mut out = vec![0.0; y.len()];
    softmin_into(y, epsilon, &mut out);
    Ok(out)
}

/// Writes the fractions into `out` and returns the smooth minimum.
///
/// Non-allocating kernel used in the per-site loops. Callers guarantee
/// `y` non-empty, `out.len() == y.len()` and `epsilon > 0`.
#[inline]
pub(crate) fn softmin_into(y: &[f64], epsilon: f64, out: &mut [f64]) -> f64 {
    debug_assert_eq!(y.len(), out.len());
    let lo = min_of(y);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(y) {
        let e = (-(v - lo) / epsilon).exp();
        *o = e;
        s += e;
    }
    let inv = 1.0 / s;
    for o in out.iter_mut() {
        *o *= inv;
    }
    lo - epsilon * s.ln()
}

/// Negative entropy `Σ δ_j log δ_j` with `0 log 0 = 0`.
pub fn negative_entropy(delta: &[f64]) -> Result<f64> {
    if delta.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for (index, &value) in delta.iter().enumerate() {
        if !(value >= -SIMPLEX_TOL) || value > 1.0 + SIMPLEX_TOL {
            return Err(Error::NotInSimplex { index, value });
        }
    }
    let mass: f64 = delta.iter().sum();
    if (mass - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!(
            "fractions sum to {mass}, not 1"
        )));
    }
    for &d in delta {
        total += xlogx(d);
    }
    Ok(total)
}

/// `x log x` continuously extended by 0 at (and, for roundoff, below) zero.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

#[inline]
fn min_of(y: &[f64]) -> f64 {
    y.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_args(y: &[f64], epsilon: f64) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be positive, got {epsilon}"
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite input {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_pair_shifts_by_log_n() {
        let v = softmin(&[1.0, 1.0], 0.5).unwrap();
        assert_abs_diff_eq!(v, 1.0 - 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.65343, epsilon = 5e-6);
    }

    #[test]
    fn hand_evaluated_values() {
        // 1 - ln(1 + e^-1)
        assert_abs_diff_eq!(softmin(&[1.0, 2.0], 1.0).unwrap(), 0.686738, epsilon = 5e-7);
        // -ln(1 + e^-10)
        assert_abs_diff_eq!(softmin(&[0.0, 10.0], 1.0).unwrap(), -4.53989e-5, epsilon = 5e-10);
    }

    #[test]
    fn extreme_ratios_are_finite() {
        let v = softmin(&[1e6, -1e6, 3.0], 1.0).unwrap();
        assert_eq!(v, -1e6);
        let d = softmin_fractions(&[1e6, -1e6], 1.0).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
    }

    #[test]
    fn fractions_examples() {
        let d = softmin_fractions(&[1.0, 1.0, 1.0], 0.123).unwrap();
        for x in &d {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let d = softmin_fractions(&[1.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(d[0], 0.731059, epsilon = 5e-7);
        assert_abs_diff_eq!(d[1], 0.268941, epsilon = 5e-7);
        let d = softmin_fractions(&[0.0, 100.0], 0.01).unwrap();
        assert_eq!(d[0], 1.0);
        assert!(d[1] < 1e-300);
    }

    #[test]
    fn empty_and_bad_smoothing() {
        assert_eq!(softmin(&[], 1.0), Err(Error::EmptyInput));
        assert_eq!(softmin_fractions(&[], 1.0), Err(Error::EmptyInput));
        assert!(softmin(&[1.0], 0.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let n = 7;
        let u = vec![1.0 / n as f64; n];
        assert_abs_diff_eq!(negative_entropy(&u).unwrap(), -(n as f64).ln(), epsilon = 1e-14);
        assert_eq!(negative_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            negative_entropy(&[0.731059, 0.268941]).unwrap(),
            -0.582203,
            epsilon = 1e-6
        );
    }

    #[test]
    fn entropy_rejects_negative_component() {
        assert!(matches!(
            negative_entropy(&[1.1, -0.1]),
            Err(Error::NotInSimplex { index: 0, .. })
        ));
        assert!(matches!(
            negative_entropy(&[0.5, 0.6, -0.1]),
            Err(Error::NotInSimplex { index: 2, .. })
        ));
        // tiny roundoff negatives are tolerated
        assert!(negative_entropy(&[1.0 + 5e-10, -5e-10]).is_ok());
    }
}
