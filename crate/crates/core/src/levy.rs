//! Spectrally positive Lévy model: X(t) = -c t + σ B(t) + compound Poisson
//! with phase-type jumps.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::roots;

const PROB_TOL: f64 = 1e-12;

/// Matrix exponential by scaling and squaring with a Taylor core. Phase-type
/// sub-generators are small and well conditioned, so this is accurate to a
/// few ulps of the norm.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = (0..n).map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0;
    while norm / (1u64 << s) as f64 > 0.5 && s < 60 {
        s += 1;
    }
    let a = m / (1u64 << s) as f64;
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &a / k as f64;
        out += &term;
    }
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// Phase-type distribution `(alpha, T)` with exit vector `t = -T 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    alpha: DVector<f64>,
    t: DMatrix<f64>,
    exit: DVector<f64>,
}

impl PhaseType {
    pub fn new(alpha: Vec<f64>, t: Vec<Vec<f64>>) -> Result<Self> {
        let m = alpha.len();
        if m == 0 {
            bail!(InvalidModel, "phase-type needs at least one state");
        }
        if t.len() != m || t.iter().any(|row| row.len() != m) {
            bail!(InvalidModel, "sub-generator must be {m}x{m}");
        }
        if alpha.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            bail!(InvalidModel, "alpha entries must be finite and non-negative");
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            bail!(InvalidModel, "alpha sums to {total}, expected 1");
        }
        for (i, row) in t.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    bail!(InvalidModel, "T[{i}][{j}] is not finite");
                }
                if i == j && v >= 0.0 {
                    bail!(InvalidModel, "T[{i}][{i}] = {v} must be negative");
                }
                if i != j && v < 0.0 {
                    bail!(InvalidModel, "T[{i}][{j}] = {v} must be non-negative");
                }
            }
            let s: f64 = row.iter().sum();
            if s > PROB_TOL * row[i].abs() {
                bail!(InvalidModel, "row {i} of T sums to {s} > 0");
            }
        }
        let t = DMatrix::from_fn(m, m, |i, j| t[i][j]);
        for ev in t.clone().complex_eigenvalues().iter() {
            if !(ev.re < 0.0) {
                bail!(InvalidModel, "T has eigenvalue {ev} with non-negative real part");
            }
        }
        let exit = DVector::from_fn(m, |i, _| -t.row(i).sum());
        Ok(Self { alpha: DVector::from_vec(alpha), t, exit })
    }

    /// Exponential law with the given rate.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(alloc::vec![1.0], alloc::vec![alloc::vec![-rate]])
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn sub_generator(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn exit(&self) -> &DVector<f64> {
        &self.exit
    }

    /// E[Z] = -alpha T^{-1} 1.
    pub fn mean(&self) -> f64 {
        let ones = DVector::from_element(self.order(), 1.0);
        let x = self.t.clone().lu().solve(&ones).expect("sub-generator is non-singular");
        -self.alpha.dot(&x)
    }

    /// Density alpha exp(Tz) t.
    pub fn density(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let e = expm(&(&self.t * z));
        (self.alpha.transpose() * e * &self.exit)[(0, 0)].max(0.0)
    }

    /// Tail probability P(Z > z) = alpha exp(Tz) 1.
    pub fn tail(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        let e = expm(&(&self.t * z));
        let ones = DVector::from_element(self.order(), 1.0);
        (self.alpha.transpose() * e * ones)[(0, 0)].clamp(0.0, 1.0)
    }

    fn resolvent_exit(&self, s: Complex64) -> DVector<Complex64> {
        let m = self.order();
        let a = DMatrix::from_fn(m, m, |i, j| {
            let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
            d - Complex64::new(self.t[(i, j)], 0.0)
        });
        let rhs = DVector::from_fn(m, |i, _| Complex64::new(self.exit[i], 0.0));
        a.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(m, Complex64::new(f64::NAN, f64::NAN)))
    }

    /// Laplace transform alpha (sI - T)^{-1} t at complex `s`.
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        let x = self.resolvent_exit(s);
        (0..self.order()).map(|i| x[i] * self.alpha[i]).sum()
    }

    /// d/ds of [`Self::laplace`]: -alpha (sI - T)^{-2} t.
    pub fn laplace_deriv(&self, s: Complex64) -> Complex64 {
        let m = self.order();
        let x = self.resolvent_exit(s);
        let a = DMatrix::from_fn(m, m, |i, j| {
            let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
            d - Complex64::new(self.t[(i, j)], 0.0)
        });
        match a.lu().solve(&x) {
            Some(y) => -(0..m).map(|i| y[i] * self.alpha[i]).sum::<Complex64>(),
            None => Complex64::new(f64::NAN, f64::NAN),
        }
    }

    /// Characteristic polynomial det(sI - T) (ascending coefficients, monic)
    /// and the numerator polynomial alpha adj(sI - T) t, by Faddeev–LeVerrier.
    pub fn rational_form(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.order();
        let mut charp = alloc::vec![0.0; m + 1];
        charp[m] = 1.0;
        let mut numer = alloc::vec![0.0; m];
        let mut mk = DMatrix::<f64>::zeros(m, m);
        for k in 1..=m {
            mk = &self.t * &mk + DMatrix::identity(m, m) * charp[m - k + 1];
            numer[m - k] = self.alpha.dot(&(&mk * &self.exit));
            charp[m - k] = -(&self.t * &mk).trace() / k as f64;
        }
        (charp, numer)
    }
}

/// Path-variation class of X.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationClass {
    Bounded,
    Unbounded,
}

/// Spectrally positive Lévy process with Brownian part and phase-type jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    c: f64,
    sigma: f64,
    kappa: f64,
    jump: Option<PhaseType>,
    psi0: f64,
}

impl LevyModel {
    pub fn new(c: f64, sigma: f64, kappa: f64, jump: Option<PhaseType>) -> Result<Self> {
        let model = Self::new_unrestricted(c, sigma, kappa, jump)?;
        if !(model.psi0 < 0.0) {
            bail!(InvalidModel, "psi'(0+) = {} must be negative so that X drifts to +infinity", model.psi0);
        }
        Ok(model)
    }

    /// Like [`Self::new`] but without the drift-to-infinity requirement.
    /// Scale functions remain well defined; the dividend problem does not.
    pub fn new_unrestricted(c: f64, sigma: f64, kappa: f64, jump: Option<PhaseType>) -> Result<Self> {
        if !c.is_finite() || !sigma.is_finite() || !kappa.is_finite() {
            bail!(InvalidModel, "c, sigma and kappa must be finite");
        }
        if sigma < 0.0 {
            bail!(InvalidModel, "sigma = {sigma} must be non-negative");
        }
        if kappa < 0.0 {
            bail!(InvalidModel, "kappa = {kappa} must be non-negative");
        }
        let jump = if kappa > 0.0 {
            match jump {
                Some(j) => Some(j),
                None => bail!(InvalidModel, "kappa > 0 requires a jump distribution"),
            }
        } else {
            None
        };
        if sigma == 0.0 && !(c > 0.0) {
            bail!(InvalidModel, "with sigma = 0 the drift c must be positive (got {c})");
        }
        let mean = jump.as_ref().map_or(0.0, PhaseType::mean);
        let psi0 = c - kappa * mean;
        Ok(Self { c, sigma, kappa, jump, psi0 })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn jump(&self) -> Option<&PhaseType> {
        self.jump.as_ref()
    }

    pub fn variation_class(&self) -> VariationClass {
        if self.sigma > 0.0 {
            VariationClass::Unbounded
        } else {
            VariationClass::Bounded
        }
    }

    pub fn drifts_to_infinity(&self) -> bool {
        self.psi0 < 0.0
    }

    /// psi'(0+) = c - kappa E[Z] (negative for admissible models).
    pub fn psi_prime_at_zero(&self) -> f64 {
        self.psi0
    }

    pub fn psi(&self, theta: f64) -> f64 {
        self.psi_complex(Complex64::new(theta, 0.0)).re
    }

    pub fn psi_complex(&self, s: Complex64) -> Complex64 {
        let mut v = s * self.c + s * s * (0.5 * self.sigma * self.sigma);
        if let Some(j) = &self.jump {
            v += (j.laplace(s) - 1.0) * self.kappa;
        }
        v
    }

    pub fn psi_prime(&self, theta: f64) -> f64 {
        self.psi_prime_complex(Complex64::new(theta, 0.0)).re
    }

    pub fn psi_prime_complex(&self, s: Complex64) -> Complex64 {
        let mut v = s * (self.sigma * self.sigma) + self.c;
        if let Some(j) = &self.jump {
            v += j.laplace_deriv(s) * self.kappa;
        }
        v
    }

    /// Phi(q): the positive root of psi = q.
    pub fn phi(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            bail!(InvalidParameter, "phi needs q > 0, got {q}");
        }
        let hi = roots::expand_upper(|t| self.psi(t) - q, 1.0, true)?;
        // psi - q is negative just above 0 because psi'(0+) < 0.
        let mut lo = 0.0;
        let mut hi = hi;
        let mut x = hi;
        for _ in 0..200 {
            let f = self.psi(x) - q;
            if f.abs() <= 1e-13 * q.max(1.0) {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = f / self.psi_prime(x);
            let nx = x - step;
            x = if nx > lo && nx < hi && step.is_finite() { nx } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * hi {
                return Ok(x);
            }
        }
        bail!(NumericFailure, "Phi({q}) did not converge, bracket [{lo}, {hi}]")
    }

    /// Jump density f(z) (zero when there are no jumps).
    pub fn jump_density(&self, z: f64) -> f64 {
        self.jump.as_ref().map_or(0.0, |j| j.density(z))
    }

    /// Drift of the Lévy–Khintchine triplet with small jumps compensated on
    /// (0, 1): the generator uses -gamma g'.
    pub fn generator_drift(&self) -> Result<f64> {
        let Some(j) = &self.jump else { return Ok(self.c) };
        // E[Z; Z < 1] = E[Z] - E[Z; Z >= 1], and E[Z; Z >= 1] = P(Z >= 1) + E[(Z - 1)^+].
        let m = j.order();
        let e1 = expm(j.sub_generator());
        let ones = DVector::from_element(m, 1.0);
        let tail1 = j.alpha().transpose() * &e1;
        let p1 = (&tail1 * &ones)[(0, 0)];
        let tinv_ones = j.sub_generator().clone().lu().solve(&ones);
        let Some(tinv_ones) = tinv_ones else { bail!(NumericFailure, "singular sub-generator") };
        let excess = -(&tail1 * tinv_ones)[(0, 0)];
        let small = j.mean() - p1 - excess;
        Ok(self.c - self.kappa * small)
    }

    /// Cleared-denominator polynomial of psi(s) - p (ascending coefficients).
    pub fn cleared_polynomial(&self, p: f64) -> Vec<f64> {
        let half_s2 = 0.5 * self.sigma * self.sigma;
        let (charp, numer) = match &self.jump {
            Some(j) => j.rational_form(),
            None => (alloc::vec![1.0], alloc::vec![]),
        };
        // (c s + σ²s²/2 - κ - p) det(sI - T) + κ alpha adj(sI - T) t
        let lin = [-self.kappa - p, self.c, half_s2];
        let mut out = alloc::vec![0.0; charp.len() + 2];
        for (i, &a) in lin.iter().enumerate() {
            for (k, &b) in charp.iter().enumerate() {
                out[i + k] += a * b;
            }
        }
        for (k, &b) in numer.iter().enumerate() {
            out[k] += self.kappa * b;
        }
        while out.len() > 1 && *out.last().unwrap() == 0.0 {
            out.pop();
        }
        out
    }
}
