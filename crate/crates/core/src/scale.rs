//! Scale functions W, W̄, Z, Z̄, Z(·, θ), their two-parameter composites and
//! the K/H/I/J kernels, all as exact exponential sums.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::expsum::{ExpSum, Piecewise, Term, RATE_COINCIDENCE};
use crate::levy::LevyModel;
use crate::roots::polynomial_roots;

const ROOT_RESIDUAL: f64 = 1e-10;
const ROOT_SEPARATION: f64 = 1e-8;

/// Roots of psi(s) = p, conjugate-closed and sorted by decreasing real part.
pub fn roots_of(model: &LevyModel, p: f64) -> Result<Vec<Complex64>> {
    let poly = model.cleared_polynomial(p);
    let degree = poly.len() - 1;
    let target = Complex64::new(p, 0.0);
    let mut polished = Vec::with_capacity(degree);
    for z0 in polynomial_roots(&poly)? {
        let mut z = z0;
        for _ in 0..60 {
            let step = (model.psi_complex(z) - target) / model.psi_prime_complex(z);
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            z -= step;
            if step.norm() <= 1e-15 * z.norm().max(1.0) {
                break;
            }
        }
        if z.im.abs() <= 1e-10 * z.norm().max(1.0) {
            z.im = 0.0;
        }
        polished.push(z);
    }
    let mut roots: Vec<Complex64> = polished.iter().copied().filter(|z| z.im == 0.0).collect();
    let upper: Vec<Complex64> = polished.iter().copied().filter(|z| z.im > 0.0).collect();
    let lower = polished.iter().filter(|z| z.im < 0.0).count();
    if upper.len() != lower {
        bail!(NumericFailure, "roots of psi = {p} are not conjugate-closed");
    }
    for z in upper {
        roots.push(z);
        roots.push(z.conj());
    }
    if roots.len() != degree {
        bail!(NumericFailure, "expected {degree} roots of psi = {p}, found {}", roots.len());
    }
    let span = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if (roots[i] - roots[j]).norm() < ROOT_SEPARATION * span {
                bail!(NumericFailure, "near-repeated roots {} and {} of psi = {p}; perturb the parameters", roots[i], roots[j]);
            }
        }
    }
    for z in &roots {
        let res = (model.psi_complex(*z) - target).norm();
        if res > ROOT_RESIDUAL * residual_scale(model, *z, p) {
            bail!(NumericFailure, "root {z} of psi = {p} has residual {res:e}");
        }
    }
    roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap()));
    Ok(roots)
}

/// Magnitude of the largest summand of psi(z) - p, for relative residuals.
fn residual_scale(model: &LevyModel, z: Complex64, p: f64) -> f64 {
    let mut s = p.max(1.0).max(model.c().abs() * z.norm()).max(0.5 * model.sigma().powi(2) * z.norm_sqr());
    if let Some(j) = model.jump() {
        s = s.max(model.kappa()).max(model.kappa() * j.laplace(z).norm());
    }
    s
}

/// Scale functions for a single discount rate p.
#[derive(Debug, Clone)]
pub struct ScaleFamily {
    p: f64,
    roots: Vec<Complex64>,
    coeffs: Vec<Complex64>,
    w: ExpSum,
    wbar: ExpSum,
    z: ExpSum,
    zbar: ExpSum,
}

impl ScaleFamily {
    pub fn build(model: &LevyModel, p: f64) -> Result<Self> {
        if !(p > 0.0) {
            bail!(InvalidParameter, "discount rate must be positive, got {p}");
        }
        let roots = roots_of(model, p)?;
        let coeffs: Vec<Complex64> = roots.iter().map(|z| Complex64::new(1.0, 0.0) / model.psi_prime_complex(*z)).collect();
        let w = ExpSum::from_terms(roots.iter().zip(&coeffs).map(|(&rate, &coeff)| Term::new(coeff, rate, 0)));
        let wbar = w.antiderivative();
        let z = ExpSum::constant(1.0).axpy(p, &wbar);
        let zbar = z.antiderivative();
        Ok(Self { p, roots, coeffs, w, wbar, z, zbar })
    }

    pub fn rate(&self) -> f64 {
        self.p
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// Residues 1/psi'(ζ_i) of W.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest real root, i.e. Phi(p).
    pub fn phi(&self) -> f64 {
        self.roots[0].re
    }

    /// W on [0, ∞) as an exponential sum.
    pub fn w_sum(&self) -> &ExpSum {
        &self.w
    }

    pub fn wbar_sum(&self) -> &ExpSum {
        &self.wbar
    }

    pub fn z_sum(&self) -> &ExpSum {
        &self.z
    }

    pub fn zbar_sum(&self) -> &ExpSum {
        &self.zbar
    }

    /// Z(·, θ) on [0, ∞); `psi_theta` is psi(θ).
    pub fn z_theta_sum(&self, theta: f64, psi_theta: f64) -> ExpSum {
        let th = Complex64::new(theta, 0.0);
        let k = self.p - psi_theta;
        let mut s = ExpSum::exponential(Complex64::new(1.0, 0.0), th);
        if k == 0.0 {
            return s;
        }
        for (&zeta, &c) in self.roots.iter().zip(&self.coeffs) {
            let diff = zeta - th;
            if diff.norm() <= RATE_COINCIDENCE * zeta.norm().max(1.0) {
                s.push(Term::new(c * k, th, 1));
            } else {
                let a = c * k / diff;
                s.push(Term::new(a, zeta, 0));
                s.push(Term::new(-a, th, 0));
            }
        }
        s
    }

    pub fn w_pw(&self) -> Piecewise {
        Piecewise::new(alloc::vec![0.0], alloc::vec![ExpSum::zero(), self.w.clone()])
    }

    pub fn wbar_pw(&self) -> Piecewise {
        Piecewise::new(alloc::vec![0.0], alloc::vec![ExpSum::zero(), self.wbar.clone()])
    }

    pub fn z_pw(&self) -> Piecewise {
        Piecewise::new(alloc::vec![0.0], alloc::vec![ExpSum::constant(1.0), self.z.clone()])
    }

    pub fn zbar_pw(&self) -> Piecewise {
        Piecewise::new(alloc::vec![0.0], alloc::vec![ExpSum::linear(1.0), self.zbar.clone()])
    }

    pub fn z_theta_pw(&self, theta: f64, psi_theta: f64) -> Piecewise {
        let e = ExpSum::exponential(Complex64::new(1.0, 0.0), Complex64::new(theta, 0.0));
        Piecewise::new(alloc::vec![0.0], alloc::vec![e, self.z_theta_sum(theta, psi_theta)])
    }

    /// W^(p)(x); derivatives at 0 are right limits.
    pub fn w(&self, x: f64, order: u32) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.w.eval_deriv(x, order)
        }
    }

    pub fn wbar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.wbar.eval(x)
        }
    }

    pub fn z(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            self.z.eval(x)
        }
    }

    pub fn zbar(&self, x: f64) -> f64 {
        if x < 0.0 {
            x
        } else if x == 0.0 {
            0.0
        } else {
            self.zbar.eval(x)
        }
    }
}

/// Which two-parameter composite to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompositeKind {
    W,
    Wbar,
    ZTheta(f64),
    Zbar,
}

/// Scale functions for the pair of rates q and q + r.
#[derive(Debug, Clone)]
pub struct ScaleEngine {
    model: LevyModel,
    q: f64,
    r: f64,
    fq: ScaleFamily,
    fqr: ScaleFamily,
}

impl ScaleEngine {
    pub fn build(model: &LevyModel, q: f64, r: f64) -> Result<Self> {
        if !(q > 0.0) || !(r >= 0.0) {
            bail!(InvalidParameter, "need q > 0 and r >= 0, got q = {q}, r = {r}");
        }
        let fq = ScaleFamily::build(model, q)?;
        let fqr = if r == 0.0 { fq.clone() } else { ScaleFamily::build(model, q + r)? };
        Ok(Self { model: model.clone(), q, r, fq, fqr })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Family at rate q.
    pub fn fq(&self) -> &ScaleFamily {
        &self.fq
    }

    /// Family at rate q + r.
    pub fn fqr(&self) -> &ScaleFamily {
        &self.fqr
    }

    pub fn w(&self, x: f64, order: u32) -> Result<f64> {
        if order > 2 {
            bail!(Unsupported, "derivative order {order} > 2");
        }
        Ok(self.fq.w(x, order))
    }

    pub fn wbar(&self, x: f64) -> f64 {
        self.fq.wbar(x)
    }

    pub fn z(&self, x: f64) -> f64 {
        self.fq.z(x)
    }

    pub fn zbar(&self, x: f64) -> f64 {
        self.fq.zbar(x)
    }

    pub fn z_theta(&self, x: f64, theta: f64) -> f64 {
        if x < 0.0 {
            return (theta * x).exp();
        }
        self.fq.z_theta_sum(theta, self.model.psi(theta)).eval(x)
    }

    /// The (q, r)-composite of a (q+r)-level function `g`, as a function of
    /// u = a - x with d = b - a:
    /// g(u + d) - r ∫_0^u W^(q)(u - y) g(y + d) dy.
    fn composite_of(&self, g: &Piecewise, d: f64) -> Piecewise {
        let neg = g.pieces()[0].shift(d);
        let pos = g.pieces()[1].shift(d);
        let inner = pos.axpy(-self.r, &self.fq.w.convolve(&pos));
        Piecewise::new(alloc::vec![-d, 0.0], alloc::vec![neg, pos, inner])
    }

    /// Composite of the given kind as a function of u = a - x.
    pub fn composite_u(&self, kind: CompositeKind, a: f64, b: f64) -> Result<Piecewise> {
        if !(a < b) {
            bail!(Domain, "composite needs a < b, got a = {a}, b = {b}");
        }
        let g = match kind {
            CompositeKind::W => self.fqr.w_pw(),
            CompositeKind::Wbar => self.fqr.wbar_pw(),
            CompositeKind::ZTheta(theta) => self.fqr.z_theta_pw(theta, self.model.psi(theta)),
            CompositeKind::Zbar => self.fqr.zbar_pw(),
        };
        Ok(self.composite_of(&g, b - a))
    }

    pub fn composite(&self, kind: CompositeKind, a: f64, b: f64, x: f64) -> Result<f64> {
        Ok(self.composite_u(kind, a, b)?.eval(a - x))
    }

    /// Composites and kernels for a fixed barrier pair.
    pub fn kernels(&self, a: f64, b: f64) -> Result<Kernels<'_>> {
        Kernels::build(self, a, b)
    }

    pub fn kernel_k(&self, a: f64, b: f64, x: f64) -> Result<f64> {
        Ok(self.kernels(a, b)?.k.eval(a - x))
    }

    pub fn kernel_h(&self, a: f64, b: f64, x: f64) -> Result<f64> {
        Ok(self.kernels(a, b)?.h.eval(a - x))
    }

    pub fn kernel_i(&self, a: f64, b: f64, x: f64, theta: f64) -> Result<f64> {
        Ok(self.kernels(a, b)?.i_theta(theta).eval(a - x))
    }

    pub fn kernel_j(&self, a: f64, b: f64, x: f64) -> Result<f64> {
        Ok(self.kernels(a, b)?.j.eval(a - x))
    }
}

/// Composites and kernels at fixed (a, b); every function takes u = a - x.
#[derive(Debug, Clone)]
pub struct Kernels<'e> {
    engine: &'e ScaleEngine,
    pub a: f64,
    pub b: f64,
    pub w: Piecewise,
    pub wbar: Piecewise,
    pub z: Piecewise,
    pub zbar: Piecewise,
    pub k: Piecewise,
    pub h: Piecewise,
    pub i: Piecewise,
    pub j: Piecewise,
    /// W^(q+r)(b-a), Z^(q+r)(b-a), W̄^(q+r)(b-a), Z̄^(q+r)(b-a).
    pub w_d: f64,
    pub z_d: f64,
    pub wbar_d: f64,
    pub zbar_d: f64,
}

impl<'e> Kernels<'e> {
    fn build(engine: &'e ScaleEngine, a: f64, b: f64) -> Result<Self> {
        let (q, r) = (engine.q, engine.r);
        let psi0 = engine.model.psi_prime_at_zero();
        let w = engine.composite_u(CompositeKind::W, a, b)?;
        let wbar = engine.composite_u(CompositeKind::Wbar, a, b)?;
        let z = engine.composite_u(CompositeKind::ZTheta(0.0), a, b)?;
        let zbar = engine.composite_u(CompositeKind::Zbar, a, b)?;
        let d = b - a;
        let fqr = &engine.fqr;
        let (w_d, z_d, wbar_d, zbar_d) = (fqr.w(d, 0), fqr.z(d), fqr.wbar(d), fqr.zbar(d));
        let zq = engine.fq.z_pw();

        let k = z.scale(q / z_d).axpy(r, &zq).scale(1.0 / (q + r));
        let i = z.axpy(-z_d / w_d, &w);
        let h = w.scale((r * z_d + q) / w_d).axpy(r, &zq.axpy(-1.0, &z)).scale(1.0 / (q + r));
        let j = zbar.axpy(-psi0, &wbar).axpy(-(zbar_d - psi0 * wbar_d) / w_d, &w);
        Ok(Self { engine, a, b, w, wbar, z, zbar, k, h, i, j, w_d, z_d, wbar_d, zbar_d })
    }

    /// ℐ(·, θ) as a function of u.
    pub fn i_theta(&self, theta: f64) -> Piecewise {
        if theta == 0.0 {
            return self.i.clone();
        }
        let e = self.engine;
        let zt = e.composite_u(CompositeKind::ZTheta(theta), self.a, self.b).expect("a < b checked at build");
        let zt_d = e.fqr.z_theta_sum(theta, e.model.psi(theta)).eval(self.b - self.a);
        zt.axpy(-zt_d / self.w_d, &self.w)
    }
}
