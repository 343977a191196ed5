//! Numerical checks of the variational inequalities and smooth fit.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::expsum::Side;
use crate::levy::LevyModel;
use crate::optimizer::{self, HybridSolution};
use crate::quad::{integrate_pieces, QuadOptions};
use crate::scale::ScaleEngine;
use crate::valuation::{self, Regime, Upper, ValueFunction};

/// Tolerance for identities evaluated in closed form.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Tolerance for checks that go through quadrature.
pub const QUAD_TOL: f64 = 1e-6;
/// Slope tolerance for v' ≥ β.
pub const SLOPE_TOL: f64 = 1e-7;
/// Tolerance for v'' ≤ 0.
pub const CONCAVITY_TOL: f64 = 1e-9;
/// Neglected jump mass κ P(Z > cutoff) · max(1, cutoff).
pub const TAIL_MASS: f64 = 1e-12;

/// A function with derivatives of order 0..=2 available pointwise.
pub trait Smooth {
    /// Derivative of the given order; right limits at kinks.
    fn eval(&self, x: f64, order: u32) -> f64;

    /// Points where a derivative may jump; used as quadrature breaks.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Smooth for ValueFunction {
    fn eval(&self, x: f64, order: u32) -> f64 {
        self.deriv(x, order, Side::Right)
    }

    fn kinks(&self) -> Vec<f64> {
        let mut k = alloc::vec![self.lower];
        if let Upper::Finite(b) = self.upper {
            k.push(b);
        }
        k
    }
}

/// Adapter for a closure `(x, order) -> value`.
pub struct FnHandle<F: Fn(f64, u32) -> f64>(pub F);

impl<F: Fn(f64, u32) -> f64> Smooth for FnHandle<F> {
    fn eval(&self, x: f64, order: u32) -> f64 {
        (self.0)(x, order)
    }
}

/// The generator ℒ of X with compensated jumps below 1.
#[derive(Debug, Clone)]
pub struct Generator<'m> {
    model: &'m LevyModel,
    gamma: f64,
    cutoff: f64,
    opts: QuadOptions,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m LevyModel) -> Result<Self> {
        let gamma = model.generator_drift()?;
        let mut cutoff = 1.0;
        if let Some(j) = model.jump() {
            while model.kappa() * j.tail(cutoff) * cutoff.max(1.0) >= TAIL_MASS {
                cutoff *= 2.0;
                if cutoff > 1e6 {
                    bail!(NumericFailure, "jump tail does not decay");
                }
            }
        }
        Ok(Self { model, gamma, cutoff, opts: QuadOptions::default() })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Jump sizes beyond this are ignored.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// ℒg(x) = -γ g'(x) + σ²/2 g''(x) + ∫ [g(x+z) - g(x) - g'(x) z 1{z<1}] κ f(z) dz.
    pub fn apply<G: Smooth + ?Sized>(&self, g: &G, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            bail!(Domain, "generator needs x > 0, got {x}");
        }
        let g0 = g.eval(x, 0);
        let g1 = g.eval(x, 1);
        let s = self.model.sigma();
        let mut out = -self.gamma * g1 + 0.5 * s * s * g.eval(x, 2);
        if let Some(j) = self.model.jump() {
            let mut breaks = alloc::vec![0.0, 1.0, self.cutoff];
            breaks.extend(g.kinks().into_iter().map(|k| k - x).filter(|&z| z > 0.0 && z < self.cutoff));
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let integrand = |z: f64| {
                let comp = if z < 1.0 { g1 * z } else { 0.0 };
                (g.eval(x + z, 0) - g0 - comp) * j.density(z)
            };
            out += self.model.kappa() * integrate_pieces(integrand, &breaks, self.opts)?;
        }
        Ok(out)
    }
}

/// ℒg(x) for a single point.
pub fn apply_generator<G: Smooth + ?Sized>(model: &LevyModel, g: &G, x: f64) -> Result<f64> {
    Generator::new(model)?.apply(g, x)
}

/// Verification grid: `log_points` log-spaced points on [lo, split) and
/// `lin_points` equally spaced points on [split, hi], with points within
/// `exclusion` of a barrier removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    /// Upper end as a multiple of the largest finite barrier (or of max(a, 1)).
    pub hi_factor: f64,
    pub log_points: usize,
    pub lin_points: usize,
    pub exclusion: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: 1e-4, hi_factor: 3.0, log_points: 100, lin_points: 300, exclusion: 1e-6 }
    }
}

impl GridSpec {
    pub fn points(&self, a: f64, b: Upper) -> Vec<f64> {
        let top = match b {
            Upper::Finite(b) => b,
            Upper::Infinite => a.max(1.0),
        };
        let hi = self.hi_factor * top;
        let split = (0.1 * top).max(self.lo * 10.0).min(hi);
        let mut pts = Vec::with_capacity(self.log_points + self.lin_points);
        let (l0, l1) = (self.lo.ln(), split.ln());
        for i in 0..self.log_points {
            pts.push((l0 + (l1 - l0) * i as f64 / self.log_points as f64).exp());
        }
        for i in 0..self.lin_points {
            let t = if self.lin_points > 1 { i as f64 / (self.lin_points - 1) as f64 } else { 1.0 };
            pts.push(split + (hi - split) * t);
        }
        let mut barriers = alloc::vec![a];
        if let Upper::Finite(b) = b {
            barriers.push(b);
        }
        pts.retain(|&x| barriers.iter().all(|&k| (x - k).abs() > self.exclusion));
        pts
    }
}

/// One-sided limits of a derivative at a barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DerivativeJump {
    pub at: f64,
    pub order: u32,
    pub left: f64,
    pub right: f64,
}

impl DerivativeJump {
    pub fn jump(&self) -> f64 {
        (self.right - self.left).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HjbReport {
    pub regime: Regime,
    pub a_star: f64,
    pub b_star: Option<f64>,
    pub grid: Vec<f64>,
    /// (ℒ - q)v + r m.
    pub residual_variational: Vec<f64>,
    /// Closed form of the same quantity where one is available.
    pub residual_closed_form: Vec<Option<f64>>,
    /// v' - β.
    pub slope_check: Vec<f64>,
    /// v''.
    pub concavity: Vec<f64>,
    /// m from the barrier structure.
    pub m_closed: Vec<f64>,
    /// m by direct search over the lump sum.
    pub m_search: Vec<f64>,
    pub derivative_jumps: Vec<DerivativeJump>,
    /// Largest violation of residual ≤ 0, v' ≥ β and v'' ≤ 0.
    pub max_violation: f64,
    /// Largest |residual| on (0, b*) where equality is expected.
    pub max_equality_gap: f64,
    /// Largest |quadrature - closed form| of the residual.
    pub max_closed_form_gap: f64,
    /// Largest |m_closed - m_search|.
    pub max_m_gap: f64,
    pub failures: Vec<alloc::string::String>,
}

impl HjbReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// max over l in [0, x] of l + v(x - l) - v(x) by a grid over the
/// post-payment level followed by golden-section refinement.
pub fn lump_sum_search(vf: &ValueFunction, x: f64, n: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let vx = vf.value(x);
    let f = |y: f64| (x - y) + vf.value(y) - vx;
    let h = x / n as f64;
    let mut best = (x, 0.0);
    for i in 0..=n {
        let y = i as f64 * h;
        let val = f(y);
        if val > best.1 {
            best = (y, val);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(x));
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) > f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.1.max(f(0.5 * (lo + hi))).max(f(0.0)).max(0.0)
}

/// Evaluates the inequalities of the verification argument on a grid.
pub fn hjb_scan(engine: &ScaleEngine, sol: &HybridSolution, grid_spec: &GridSpec) -> Result<HjbReport> {
    let params = sol.params;
    let (q, r, beta) = (params.q, params.r, params.beta);
    let vf = optimizer::value_function(sol, engine)?;
    let gen = Generator::new(engine.model())?;
    let b_fin = sol.b_star.finite();
    let grid = grid_spec.points(sol.a_star, sol.b_star);
    let unbounded = engine.model().sigma() > 0.0;

    let n = grid.len();
    let mut report = HjbReport {
        regime: sol.regime,
        a_star: sol.a_star,
        b_star: b_fin,
        grid: grid.clone(),
        residual_variational: Vec::with_capacity(n),
        residual_closed_form: Vec::with_capacity(n),
        slope_check: Vec::with_capacity(n),
        concavity: Vec::with_capacity(n),
        m_closed: Vec::with_capacity(n),
        m_search: Vec::with_capacity(n),
        derivative_jumps: Vec::new(),
        max_violation: 0.0,
        max_equality_gap: 0.0,
        max_closed_form_gap: 0.0,
        max_m_gap: 0.0,
        failures: Vec::new(),
    };

    for &x in &grid {
        let m_closed = match (sol.regime, b_fin) {
            (Regime::Hybrid, Some(b)) => valuation::m_fn(&params, engine, sol.a_star, b, x),
            _ => vf.lump_sum_gain(x),
        };
        let m_search = lump_sum_search(&vf, x, 400);
        let lv = gen.apply(&vf, x)?;
        let res = lv - q * vf.value(x) + r * m_closed;
        let closed = match (sol.regime, b_fin) {
            (Regime::Hybrid, Some(b)) => Some(valuation::generator_closed_form(&params, engine, sol.a_star, b, x) + r * m_closed),
            _ => None,
        };
        let slope = vf.deriv(x, 1, Side::Right) - beta;
        let d2 = vf.deriv(x, 2, Side::Right);

        report.max_violation = report.max_violation.max(res).max(-slope).max(d2);
        let on_equality = match b_fin {
            Some(b) => x < b,
            None => true,
        };
        if on_equality {
            report.max_equality_gap = report.max_equality_gap.max(res.abs());
        }
        if let Some(c) = closed {
            report.max_closed_form_gap = report.max_closed_form_gap.max((res - c).abs());
        }
        report.max_m_gap = report.max_m_gap.max((m_closed - m_search).abs());
        if res > QUAD_TOL {
            report.failures.push(alloc::format!("(L-q)v + r m = {res:e} > 0 at x = {x}"));
        }
        if slope < -SLOPE_TOL {
            report.failures.push(alloc::format!("v' - beta = {slope:e} at x = {x}"));
        }
        if d2 > CONCAVITY_TOL {
            report.failures.push(alloc::format!("v'' = {d2:e} > 0 at x = {x}"));
        }
        if sol.regime == Regime::PurePeriodic && slope + beta < params.ratio() - SLOPE_TOL {
            report.failures.push(alloc::format!("v' below r/(q+r) at x = {x}"));
        }
        report.residual_variational.push(res);
        report.residual_closed_form.push(closed);
        report.slope_check.push(slope);
        report.concavity.push(d2);
        report.m_closed.push(m_closed);
        report.m_search.push(m_search);
    }
    if report.max_equality_gap > QUAD_TOL {
        report.failures.push(alloc::format!("residual away from 0 below b*: {:e}", report.max_equality_gap));
    }
    if report.max_closed_form_gap > QUAD_TOL {
        report.failures.push(alloc::format!("generator differs from closed form by {:e}", report.max_closed_form_gap));
    }
    if report.max_m_gap > QUAD_TOL {
        report.failures.push(alloc::format!("lump-sum closed form differs from search by {:e}", report.max_m_gap));
    }

    report.derivative_jumps = derivative_jumps(&vf, sol);
    let smooth_order = |k: &DerivativeJump, at_upper: bool| {
        // At b: C^2 (unbounded variation) or C^1; at a: C^3 or C^2.
        let top = if unbounded { 2 } else { 1 } + u32::from(!at_upper);
        k.order <= top
    };
    for k in &report.derivative_jumps {
        let at_upper = b_fin.is_some_and(|b| k.at == b);
        if smooth_order(k, at_upper) && k.jump() > QUAD_TOL {
            report.failures.push(alloc::format!("order-{} derivative jumps by {:e} at {}", k.order, k.jump(), k.at));
        }
    }
    Ok(report)
}

/// One-sided derivatives of orders 1..=3 at the barriers in use.
pub fn derivative_jumps(vf: &ValueFunction, sol: &HybridSolution) -> Vec<DerivativeJump> {
    let mut at = Vec::new();
    match sol.regime {
        Regime::Hybrid => {
            if sol.a_star > 0.0 {
                at.push(sol.a_star);
            }
            if let Upper::Finite(b) = sol.b_star {
                at.push(b);
            }
        }
        Regime::PurePeriodic if sol.a_star > 0.0 => at.push(sol.a_star),
        Regime::PureContinuous => at.push(sol.a_star),
        _ => {}
    }
    let mut out = Vec::new();
    for &p in &at {
        for order in 1..=3 {
            out.push(DerivativeJump {
                at: p,
                order,
                left: vf.deriv(p, order, Side::Left),
                right: vf.deriv(p, order, Side::Right),
            });
        }
    }
    out
}
