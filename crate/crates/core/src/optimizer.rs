//! Selection of the optimal barrier pair by smooth fit.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::levy::LevyModel;
use crate::roots::{bisect, expand_upper, MAX_BISECTION_ITERS};
use crate::scale::ScaleEngine;
use crate::valuation::{
    big_gamma_ab, continuous_barrier, gamma_small, kappa_fn, periodic_barrier, value_continuous, value_periodic,
    BarrierFunctions, ProblemParams, Regime, Upper, ValueFunction,
};

/// Final bracket width for the barrier bisections.
pub const BARRIER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    /// Γ(a*, b*).
    pub gamma_residual: f64,
    /// γ(a*, b*) when a* > 0.
    pub gamma_small_residual: Option<f64>,
    /// q/(β(q+r) - r) - Z^(q+r)(b*) when a* = 0 (non-negative up to rounding).
    pub zero_barrier_slack: Option<f64>,
    /// κ(ε).
    pub epsilon_residual: Option<f64>,
    /// Root of Γ(0, b) = 0, a lower bound for b*.
    pub b0: Option<f64>,
    pub b_bracket: Option<(f64, f64)>,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSolution {
    pub params: ProblemParams,
    pub regime: Regime,
    pub a_star: f64,
    pub b_star: Upper,
    pub epsilon: Option<f64>,
    pub diagnostics: Diagnostics,
}

fn require_hybrid(params: &ProblemParams) -> Result<()> {
    if params.regime() != Regime::Hybrid {
        bail!(Regime, "beta = {} is outside the hybrid range ({}, 1)", params.beta, params.ratio());
    }
    Ok(())
}

/// ε: the root of κ(y) = 0.
pub fn epsilon_root(params: &ProblemParams, engine: &ScaleEngine) -> Result<f64> {
    require_hybrid(params)?;
    let f = |y: f64| kappa_fn(params, engine, y);
    let hi = expand_upper(f, 1.0, false)?;
    Ok(bisect(f, 0.0, hi, 0.0)?.root)
}

/// a(b) = (b - ε) ∨ 0.
pub fn a_of_b(epsilon: f64, b: f64) -> f64 {
    (b - epsilon).max(0.0)
}

/// Γ̲(b) = Γ(a(b), b).
pub fn gamma_lower(params: &ProblemParams, engine: &ScaleEngine, epsilon: f64, b: f64) -> Result<f64> {
    big_gamma_ab(params, engine, a_of_b(epsilon, b), b)
}

/// Root b₀ of Γ(0, b) = 0.
pub fn b_zero(params: &ProblemParams, engine: &ScaleEngine) -> Result<f64> {
    require_hybrid(params)?;
    let (q, r) = (params.q, params.r);
    let psi0 = engine.model().psi_prime_at_zero();
    let c = (q + r) / q * params.excess();
    let f = |b: f64| params.beta * psi0 / q + c * engine.fqr().zbar(b);
    let hi = expand_upper(f, 1.0, true)?;
    Ok(bisect(f, 0.0, hi, BARRIER_TOL)?.root)
}

pub fn solve(params: &ProblemParams, model: &LevyModel) -> Result<HybridSolution> {
    let engine = ScaleEngine::build(model, params.q, params.r)?;
    solve_with_engine(params, &engine)
}

pub fn solve_with_engine(params: &ProblemParams, engine: &ScaleEngine) -> Result<HybridSolution> {
    if params.q != engine.q() || params.r != engine.r() {
        bail!(InvalidParameter, "engine and params disagree on (q, r)");
    }
    if !engine.model().drifts_to_infinity() {
        bail!(InvalidModel, "dividend problem needs psi'(0+) < 0");
    }
    match params.regime() {
        Regime::PurePeriodic => {
            let a = periodic_barrier(params, engine)?;
            Ok(HybridSolution {
                params: *params,
                regime: Regime::PurePeriodic,
                a_star: a,
                b_star: Upper::Infinite,
                epsilon: None,
                diagnostics: Diagnostics::default(),
            })
        }
        Regime::PureContinuous => {
            let b = continuous_barrier(params, engine)?;
            Ok(HybridSolution {
                params: *params,
                regime: Regime::PureContinuous,
                a_star: b,
                b_star: Upper::Finite(b),
                epsilon: None,
                diagnostics: Diagnostics::default(),
            })
        }
        Regime::Hybrid => solve_hybrid(params, engine),
    }
}

fn solve_hybrid(params: &ProblemParams, engine: &ScaleEngine) -> Result<HybridSolution> {
    let eps = epsilon_root(params, engine)?;
    let g = |b: f64| gamma_lower(params, engine, eps, b);

    // Γ̲(0+) = βψ'(0+)/q < 0 and Γ̲ increases to +∞.
    let b_lo = 1e-9 * eps.max(1.0);
    if g(b_lo)? >= 0.0 {
        bail!(NumericFailure, "Γ̲ is not negative near 0 (b = {b_lo})");
    }
    let mut b_hi = eps.max(1.0);
    let mut grew = 0;
    while g(b_hi)? <= 0.0 {
        b_hi *= 2.0;
        grew += 1;
        if grew > 60 {
            bail!(NumericFailure, "no sign change of Γ̲ up to b = {b_hi}");
        }
    }
    let (mut lo, mut hi) = (b_lo, b_hi);
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS && hi - lo > BARRIER_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let b = 0.5 * (lo + hi);
    let a = a_of_b(eps, b);
    let (q, r) = (params.q, params.r);
    let diagnostics = Diagnostics {
        gamma_residual: big_gamma_ab(params, engine, a, b)?,
        gamma_small_residual: if a > 0.0 { Some(gamma_small(params, engine, a, b)?) } else { None },
        zero_barrier_slack: if a > 0.0 { None } else { Some(q / (params.beta * (q + r) - r) - engine.fqr().z(b)) },
        epsilon_residual: Some(kappa_fn(params, engine, eps)),
        b0: Some(b_zero(params, engine)?),
        b_bracket: Some((b_lo, b_hi)),
        iterations,
    };
    Ok(HybridSolution {
        params: *params,
        regime: Regime::Hybrid,
        a_star: a,
        b_star: Upper::Finite(b),
        epsilon: Some(eps),
        diagnostics,
    })
}

/// Value function of a solved strategy.
pub fn value_function(sol: &HybridSolution, engine: &ScaleEngine) -> Result<ValueFunction> {
    match (sol.regime, sol.b_star) {
        (Regime::Hybrid, Upper::Finite(b)) => Ok(BarrierFunctions::new(sol.params, engine, sol.a_star, b)?.value_function()),
        (Regime::PurePeriodic, _) => value_periodic(&sol.params, engine),
        (Regime::PureContinuous, _) => value_continuous(&sol.params, engine),
        (Regime::Hybrid, Upper::Infinite) => bail!(Domain, "hybrid solution without an upper barrier"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Beta,
    R,
}

/// Solves for each value of β or r, holding the other parameters fixed.
pub fn sweep(base: &ProblemParams, model: &LevyModel, variable: SweepVariable, values: &[f64]) -> Result<Vec<HybridSolution>> {
    let mut out = Vec::with_capacity(values.len());
    match variable {
        SweepVariable::Beta => {
            let engine = ScaleEngine::build(model, base.q, base.r)?;
            for &beta in values {
                let p = ProblemParams::new(base.q, base.r, beta)?;
                out.push(solve_with_engine(&p, &engine)?);
            }
        }
        SweepVariable::R => {
            for &r in values {
                let p = ProblemParams::new(base.q, r, base.beta)?;
                out.push(solve(&p, model)?);
            }
        }
    }
    Ok(out)
}
