//! Scalar root bracketing and bisection, plus polynomial roots via the
//! companion matrix.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{bail, Result};

/// Outcome of a bisection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: u32,
    /// Width of the final bracket.
    pub width: f64,
}

pub const MAX_BISECTION_ITERS: u32 = 200;

/// Bisection on `[lo, hi]`. `f(lo)` and `f(hi)` must have opposite signs
/// (a zero at either end is accepted).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Bisection> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(Bisection { root: lo, iterations: 0, width: 0.0 });
    }
    if fhi == 0.0 {
        return Ok(Bisection { root: hi, iterations: 0, width: 0.0 });
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        bail!(NumericFailure, "bisection bracket [{lo}, {hi}] has no sign change (f = {flo}, {fhi})");
    }
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        iterations += 1;
        if fm == 0.0 {
            return Ok(Bisection { root: mid, iterations, width: 0.0 });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Bisection { root: 0.5 * (lo + hi), iterations, width: hi - lo })
}

/// Doubles `hi` starting from `start` until `f(hi)` has the sign `target_positive`.
pub fn expand_upper<F: FnMut(f64) -> f64>(mut f: F, start: f64, target_positive: bool) -> Result<f64> {
    let mut hi = start;
    for _ in 0..200 {
        let v = f(hi);
        if v.is_nan() {
            bail!(NumericFailure, "NaN while expanding bracket at {hi}");
        }
        if (v > 0.0) == target_positive && v != 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    bail!(NumericFailure, "bracket expansion failed, last upper end {hi}")
}

/// All complex roots of `sum_k coeffs[k] * x^k` (ascending order) as the
/// eigenvalues of the companion matrix.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let mut deg = coeffs.len();
    while deg > 0 && coeffs[deg - 1] == 0.0 {
        deg -= 1;
    }
    if deg < 2 {
        bail!(Domain, "polynomial of degree < 1 has no roots");
    }
    let n = deg - 1;
    let lead = coeffs[n];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -coeffs[i] / lead;
    }
    Ok(companion.complex_eigenvalues().iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let b = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((b.root - core::f64::consts::SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn companion_roots_of_cubic() {
        // (x - 1)(x + 2)(x - 3) = x^3 - 2x^2 - 5x + 6
        let mut r: Vec<f64> = polynomial_roots(&[6.0, -5.0, -2.0, 1.0])
            .unwrap()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-10);
                z.re
            })
            .collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn companion_complex_pair() {
        // x^2 + 1
        let r = polynomial_roots(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.len(), 2);
        for z in r {
            assert!(z.re.abs() < 1e-12 && (z.im.abs() - 1.0).abs() < 1e-12);
        }
    }
}
