//! Value functions of hybrid, pure periodic and pure continuous barrier
//! strategies, and the closed forms used by the verification.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::expsum::{ExpSum, Piecewise, Side};
use crate::roots::{bisect, expand_upper};
use crate::scale::{Kernels, ScaleEngine};

/// Discount rate q, periodic decision rate r and the ratio β of the
/// continuous to the periodic dividend weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Regime {
    Hybrid,
    PurePeriodic,
    PureContinuous,
}

impl ProblemParams {
    pub fn new(q: f64, r: f64, beta: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            bail!(InvalidParameter, "q = {q} must be positive");
        }
        if !(r >= 0.0 && r.is_finite()) {
            bail!(InvalidParameter, "r = {r} must be non-negative");
        }
        if !(beta > 0.0 && beta.is_finite()) {
            bail!(InvalidParameter, "beta = {beta} must be positive");
        }
        Ok(Self { q, r, beta })
    }

    /// r / (q + r).
    pub fn ratio(&self) -> f64 {
        self.r / (self.q + self.r)
    }

    /// β - r/(q+r).
    pub fn excess(&self) -> f64 {
        self.beta - self.ratio()
    }

    /// Regime by the sign of β - r/(q+r). Values within a relative
    /// `REGIME_TOL` of the boundary count as pure periodic, so that
    /// r = qβ/(1-β) computed in floating point lands on the boundary.
    /// With r = 0 there are no decision times and only the continuous
    /// strategy remains.
    pub fn regime(&self) -> Regime {
        if self.r == 0.0 {
            Regime::PureContinuous
        } else if self.beta <= self.ratio() * (1.0 + REGIME_TOL) {
            Regime::PurePeriodic
        } else if self.beta >= 1.0 {
            Regime::PureContinuous
        } else {
            Regime::Hybrid
        }
    }
}

pub const REGIME_TOL: f64 = 1e-12;

/// Upper barrier, possibly absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper {
    Finite(f64),
    Infinite,
}

impl Upper {
    pub fn finite(self) -> Option<f64> {
        match self {
            Upper::Finite(b) => Some(b),
            Upper::Infinite => None,
        }
    }
}

/// A value function with its first three derivatives, all piecewise
/// exponential sums in x.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub regime: Regime,
    /// Periodic barrier (a* or a*_p); equals the upper barrier for the
    /// pure continuous strategy.
    pub lower: f64,
    pub upper: Upper,
    v: Piecewise,
    derivs: [Piecewise; 3],
}

impl ValueFunction {
    pub fn new(regime: Regime, lower: f64, upper: Upper, v: Piecewise) -> Self {
        let d1 = v.derivative();
        let d2 = d1.derivative();
        let d3 = d2.derivative();
        Self { regime, lower, upper, v, derivs: [d1, d2, d3] }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.v.eval(x)
    }

    /// Derivative of order 0..=3; one-sided at breakpoints.
    pub fn deriv(&self, x: f64, order: u32, side: Side) -> f64 {
        match order {
            0 => self.v.eval_side(x, side),
            1..=3 => self.derivs[order as usize - 1].eval_side(x, side),
            _ => f64::NAN,
        }
    }

    pub fn piecewise(&self) -> &Piecewise {
        &self.v
    }

    /// max_{0≤l≤x} {l + v(x - l) - v(x)} under the barrier structure: the
    /// optimal lump sum brings the surplus down to the periodic barrier.
    pub fn lump_sum_gain(&self, x: f64) -> f64 {
        match self.regime {
            Regime::PureContinuous => 0.0,
            _ if x <= self.lower => 0.0,
            _ => x - self.lower + self.value(self.lower) - self.value(x),
        }
    }
}

/// Functions of a fixed barrier pair 0 ≤ a < b; internally in u = a - x.
#[derive(Debug, Clone)]
pub struct BarrierFunctions<'e> {
    pub params: ProblemParams,
    pub kernels: Kernels<'e>,
    gamma_u: Piecewise,
    k_small_u: Piecewise,
    i_small_u: Piecewise,
    gamma_ab: f64,
    kk_a: f64,
}

impl<'e> BarrierFunctions<'e> {
    pub fn new(params: ProblemParams, engine: &'e ScaleEngine, a: f64, b: f64) -> Result<Self> {
        check_pair(a, b)?;
        check_engine(&params, engine)?;
        let (q, r, beta) = (params.q, params.r, params.beta);
        let psi0 = engine.model().psi_prime_at_zero();
        let kernels = engine.kernels(a, b)?;
        let zq = engine.fq().z_pw();
        let zbq = engine.fq().zbar_pw();
        let ratio = params.ratio();

        // Γ(a,b;x) = r/(q+r) Z̄(u) + βψ'/q + (β - r/(q+r)) [Z̄comp(u) + r/q Z(u) Z̄^(q+r)(d)]
        let bracket = kernels.zbar.axpy(r / q * kernels.zbar_d, &zq);
        let gamma_u = zbq.scale(ratio).axpy(params.excess(), &bracket).add_constant(beta * psi0 / q);

        // k(u) = r/(q+r) (Z̄(u) - r/q Z̄^(q+r)(d) Z(u) - Z̄comp(u))
        let k_small_u = zbq.axpy(-r / q * kernels.zbar_d, &zq).axpy(-1.0, &kernels.zbar).scale(ratio);

        // i(u) = Z̄comp(u) - ψ' W̄comp(u) + r/q Z(u) (Z̄^(q+r)(d) - ψ' W̄^(q+r)(d))
        let i_small_u = kernels.zbar.axpy(-psi0, &kernels.wbar).axpy(r / q * (kernels.zbar_d - psi0 * kernels.wbar_d), &zq);

        let gamma_ab = gamma_u.eval(a);
        let kk_a = kernels.k.eval(a);
        Ok(Self { params, kernels, gamma_u, k_small_u, i_small_u, gamma_ab, kk_a })
    }

    pub fn a(&self) -> f64 {
        self.kernels.a
    }

    pub fn b(&self) -> f64 {
        self.kernels.b
    }

    /// Γ(a, b) = Γ(a, b; 0).
    pub fn gamma_ab(&self) -> f64 {
        self.gamma_ab
    }

    /// Γ(a, b; x).
    pub fn gamma_at(&self, x: f64) -> f64 {
        self.gamma_u.eval(self.a() - x)
    }

    /// Γ(a, b; ·) as a piecewise function of x.
    pub fn gamma_x(&self) -> Piecewise {
        self.gamma_u.reflect(self.a())
    }

    /// 𝒦(a - ·) as a piecewise function of x.
    pub fn kernel_k_x(&self) -> Piecewise {
        self.kernels.k.reflect(self.a())
    }

    /// 𝒦(a - x)/𝒦(a) · c(a) - c(a - x) for a function c of u.
    fn normalized(&self, c_u: &Piecewise) -> Piecewise {
        let ca = c_u.eval(self.a());
        self.kernels.k.scale(ca / self.kk_a).axpy(-1.0, c_u)
    }

    pub fn value_function(&self) -> ValueFunction {
        let v_u = self.normalized(&self.gamma_u);
        ValueFunction::new(Regime::Hybrid, self.a(), Upper::Finite(self.b()), v_u.reflect(self.a()))
    }

    pub fn value(&self, x: f64) -> f64 {
        let u = self.a() - x;
        self.kernels.k.eval(u) / self.kk_a * self.gamma_ab - self.gamma_u.eval(u)
    }

    /// Expected discounted periodic dividends.
    pub fn f_p(&self, x: f64) -> f64 {
        let u = self.a() - x;
        self.kernels.k.eval(u) / self.kk_a * self.k_small_u.eval(self.a()) - self.k_small_u.eval(u)
    }

    /// Expected discounted continuous dividends.
    pub fn f_c(&self, x: f64) -> f64 {
        let u = self.a() - x;
        self.kernels.k.eval(u) / self.kk_a * self.i_small_u.eval(self.a()) - self.i_small_u.eval(u)
    }

    pub fn f_p_x(&self) -> Piecewise {
        self.normalized(&self.k_small_u).reflect(self.a())
    }

    pub fn f_c_x(&self) -> Piecewise {
        self.normalized(&self.i_small_u).reflect(self.a())
    }
}

fn check_pair(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && a < b && b.is_finite()) {
        bail!(Domain, "need 0 <= a < b < inf, got a = {a}, b = {b}");
    }
    Ok(())
}

fn check_engine(params: &ProblemParams, engine: &ScaleEngine) -> Result<()> {
    if params.q != engine.q() || params.r != engine.r() {
        bail!(
            InvalidParameter,
            "engine built for (q, r) = ({}, {}) but params have ({}, {})",
            engine.q(),
            engine.r(),
            params.q,
            params.r
        );
    }
    if !engine.model().drifts_to_infinity() {
        bail!(InvalidModel, "dividend problem needs psi'(0+) < 0");
    }
    Ok(())
}

/// Γ(a, b; x).
pub fn big_gamma(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(BarrierFunctions::new(*params, engine, a, b)?.gamma_at(x))
}

/// Γ(a, b) evaluated without building the kernels: only Z̄comp(a) is needed.
pub fn big_gamma_ab(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64) -> Result<f64> {
    check_pair(a, b)?;
    let (q, r, beta) = (params.q, params.r, params.beta);
    let psi0 = engine.model().psi_prime_at_zero();
    let zbar_comp = engine.composite(crate::scale::CompositeKind::Zbar, a, b, 0.0)?;
    let fq = engine.fq();
    Ok(params.ratio() * fq.zbar(a) + beta * psi0 / q + params.excess() * (zbar_comp + r / q * fq.z(a) * engine.fqr().zbar(b - a)))
}

/// κ(y) = 1 - (β(q+r) - r) Z^(q+r)(y) / q.
pub fn kappa_fn(params: &ProblemParams, engine: &ScaleEngine, y: f64) -> f64 {
    let (q, r, beta) = (params.q, params.r, params.beta);
    1.0 - (beta * (q + r) - r) * engine.fqr().z(y) / q
}

/// γ(a, b) = r/(q+r) Z^(q)(a) κ(b - a).
pub fn gamma_small(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64) -> Result<f64> {
    check_pair(a, b)?;
    Ok(params.ratio() * engine.fq().z(a) * kappa_fn(params, engine, b - a))
}

pub fn v_hybrid(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(BarrierFunctions::new(*params, engine, a, b)?.value(x))
}

pub fn f_p(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(BarrierFunctions::new(*params, engine, a, b)?.f_p(x))
}

pub fn f_c(params: &ProblemParams, engine: &ScaleEngine, a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(BarrierFunctions::new(*params, engine, a, b)?.f_c(x))
}

/// Value of the classical barrier strategy at b (no periodic payments):
/// β [Z(b-x)(Z̄(b) + ψ'/q)/Z(b) - Z̄(b-x) - ψ'/q].
pub fn value_continuous_barrier(params: &ProblemParams, engine: &ScaleEngine, b: f64) -> Result<ValueFunction> {
    if !(b >= 0.0 && b.is_finite()) {
        bail!(Domain, "barrier must be finite and non-negative, got {b}");
    }
    let fq = engine.fq();
    let c = engine.model().psi_prime_at_zero() / params.q;
    let scale = (fq.zbar(b) + c) / fq.z(b);
    let v_u = fq.z_pw().scale(scale).axpy(-1.0, &fq.zbar_pw()).add_constant(-c).scale(params.beta);
    Ok(ValueFunction::new(Regime::PureContinuous, b, Upper::Finite(b), v_u.reflect(b)))
}

/// b*_c = Z̄^(q)^{-1}(-ψ'(0+)/q).
pub fn continuous_barrier(params: &ProblemParams, engine: &ScaleEngine) -> Result<f64> {
    let target = -engine.model().psi_prime_at_zero() / params.q;
    let f = |b: f64| engine.fq().zbar(b) - target;
    let hi = expand_upper(f, 1.0, true)?;
    Ok(bisect(f, 0.0, hi, 1e-12)?.root)
}

/// Optimal classical barrier strategy.
pub fn value_continuous(params: &ProblemParams, engine: &ScaleEngine) -> Result<ValueFunction> {
    check_engine(params, engine)?;
    let b = continuous_barrier(params, engine)?;
    value_continuous_barrier(params, engine, b)
}

pub fn v_continuous(params: &ProblemParams, engine: &ScaleEngine, x: f64) -> Result<(f64, f64)> {
    let vf = value_continuous(params, engine)?;
    Ok((vf.lower, vf.value(x)))
}

/// Periodic barrier a*_p (zero when the threshold condition fails).
pub fn periodic_barrier(params: &ProblemParams, engine: &ScaleEngine) -> Result<f64> {
    let (q, r) = (params.q, params.r);
    let psi0 = engine.model().psi_prime_at_zero();
    let phi = engine.fqr().phi();
    if psi0 >= -q * (q + r) / (r * phi) {
        return Ok(0.0);
    }
    let fq = engine.fq();
    let zt = fq.z_theta_sum(phi, q + r);
    let ratio = params.ratio();
    let f = |a: f64| -phi * ratio * (fq.zbar(a) + psi0 / q) - ratio * fq.z(a) - q / (q + r) * zt.eval(a);
    let hi = expand_upper(f, 0.5, false)?;
    Ok(bisect(f, 0.0, hi, 1e-12)?.root)
}

/// Optimal periodic barrier strategy (no continuous payments).
pub fn value_periodic(params: &ProblemParams, engine: &ScaleEngine) -> Result<ValueFunction> {
    check_engine(params, engine)?;
    let (q, r) = (params.q, params.r);
    let psi0 = engine.model().psi_prime_at_zero();
    let phi = engine.fqr().phi();
    let ratio = params.ratio();
    let a = periodic_barrier(params, engine)?;
    let v = if a > 0.0 {
        let fq = engine.fq();
        let zt = fq.z_theta_pw(phi, q + r);
        let v_u = fq
            .zbar_pw()
            .scale(-ratio)
            .add_constant(-ratio * psi0 / q)
            .axpy(-ratio / phi, &fq.z_pw())
            .axpy(-q / (r + q) / phi, &zt);
        v_u.reflect(a)
    } else {
        // r/(r+q) [x - ψ'/(r+q) (1 - e^{-Φ x})]
        let k = -psi0 / (r + q);
        let s = ExpSum::linear(1.0)
            .add(&ExpSum::constant(k))
            .add(&ExpSum::exponential(Complex64::new(-k, 0.0), Complex64::new(-phi, 0.0)))
            .scale(ratio);
        Piecewise::single(s)
    };
    Ok(ValueFunction::new(Regime::PurePeriodic, a, Upper::Infinite, v))
}

pub fn v_periodic(params: &ProblemParams, engine: &ScaleEngine, x: f64) -> Result<(f64, f64)> {
    let vf = value_periodic(params, engine)?;
    Ok((vf.lower, vf.value(x)))
}

/// Closed form of max_{0≤l≤x}{l + v(x-l) - v(x)} at the optimal hybrid pair.
pub fn m_fn(params: &ProblemParams, engine: &ScaleEngine, a_star: f64, b_star: f64, x: f64) -> f64 {
    if x <= a_star {
        return 0.0;
    }
    let fqr = engine.fqr();
    params.q / (params.q + params.r) * (x - a_star) - params.excess() * (fqr.zbar(b_star - a_star) - fqr.zbar(b_star - x))
}

/// Closed form of (ℒ - q)v at the optimal hybrid pair.
pub fn generator_closed_form(params: &ProblemParams, engine: &ScaleEngine, a_star: f64, b_star: f64, x: f64) -> f64 {
    let (q, r) = (params.q, params.r);
    let ex = params.excess();
    let zb = |y: f64| engine.fqr().zbar(y);
    if x <= a_star {
        0.0
    } else if x < b_star {
        r * (q / (q + r) * (a_star - x) - ex * (zb(b_star - x) - zb(b_star - a_star)))
    } else {
        q * r / (q + r) * (a_star - x) - ex * (q * (x - b_star) - r * zb(b_star - a_star))
    }
}
