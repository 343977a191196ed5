//! Monte Carlo simulation of the controlled surplus U = X - L_p - L_c and of
//! raw exit functionals of X.
//!
//! Events (jumps at rate κ, decision times at rate r) are drawn exactly.
//! Between events the Brownian-with-drift segment is only resolved where a
//! barrier is within reach: a segment whose Brownian bridge crosses neither
//! barrier with probability above `TINY` is accepted from its endpoint, and
//! otherwise it is bisected with exact bridge midpoints.
//!
//! Two treatments of the upper barrier are available. [`Reflection::Grid`]
//! applies classical reflection on a sub-grid of step at most `dt` and kills
//! with the bridge crossing probability between grid points. [`Reflection::Exact`]
//! samples the bridge maximum, so the reflected endpoint and the amount
//! L_c pushed out are exact; the discounting of that amount inside a segment
//! uses the unbiased identity
//! ∫_0^Δ e^{-qs} dL(s) = e^{-qΔ} L(Δ) + q ∫_0^Δ e^{-qs} L(s) ds
//! with the last integral estimated at one uniform time.
//!
//! Paths use `ChaCha8Rng` seeded from `seed` with stream = path index, and
//! statistics are reduced over fixed blocks of `BLOCK` paths in block order,
//! so results do not depend on how blocks are scheduled.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{bail, Result};
use crate::levy::{LevyModel, PhaseType};
use crate::optimizer::HybridSolution;
use crate::scale::ScaleFamily;
use crate::valuation::{ProblemParams, Upper};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;
/// Paths per reduction block.
pub const BLOCK: u64 = 1024;
/// Crossing probability below which a bridge segment is not resolved.
pub const TINY: f64 = 1e-15;
const MIN_SPLIT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reflection {
    Exact,
    Grid,
}

/// Periodic barrier `a` and continuous barrier `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barriers {
    pub a: f64,
    pub b: Upper,
}

impl Barriers {
    pub fn hybrid(a: f64, b: f64) -> Self {
        Self { a, b: Upper::Finite(b) }
    }

    pub fn periodic(a: f64) -> Self {
        Self { a, b: Upper::Infinite }
    }

    pub fn continuous(b: f64) -> Self {
        Self { a: b, b: Upper::Finite(b) }
    }

    pub fn from_solution(sol: &HybridSolution) -> Self {
        Self { a: sol.a_star, b: sol.b_star }
    }

    fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0) || !self.a.is_finite() {
            bail!(InvalidParameter, "periodic barrier a = {} must be finite and >= 0", self.a);
        }
        if let Upper::Finite(b) = self.b {
            if !(b >= self.a) || !b.is_finite() {
                bail!(InvalidParameter, "continuous barrier b = {b} must be finite and >= a = {}", self.a);
            }
        }
        Ok(())
    }

    fn periodic_active(&self) -> bool {
        match self.b {
            Upper::Finite(b) => self.a < b,
            Upper::Infinite => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: u64,
    pub dt: f64,
    pub horizon_eps: f64,
    pub seed: u64,
    pub x0: f64,
    pub barriers: Barriers,
    pub reflection: Reflection,
}

impl SimConfig {
    pub fn new(x0: f64, barriers: Barriers) -> Self {
        Self { paths: 10_000, dt: 1e-3, horizon_eps: 1e-8, seed: 0, x0, barriers, reflection: Reflection::Exact }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            bail!(InvalidParameter, "paths must be >= 1");
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            bail!(InvalidParameter, "dt = {} must be positive", self.dt);
        }
        if !(self.horizon_eps > 0.0 && self.horizon_eps < 1.0) {
            bail!(InvalidParameter, "horizon_eps = {} must lie in (0, 1)", self.horizon_eps);
        }
        if !(self.x0 >= 0.0) || !self.x0.is_finite() {
            bail!(InvalidParameter, "x0 = {} must be finite and >= 0", self.x0);
        }
        self.barriers.validate()
    }

    /// T_max = -ln(horizon_eps) / q.
    pub fn horizon(&self, q: f64) -> f64 {
        -self.horizon_eps.ln() / q
    }

    pub fn blocks(&self) -> u64 {
        self.paths.div_ceil(BLOCK)
    }
}

/// Summary of a Monte Carlo mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimEstimate {
    pub mean: f64,
    pub ci_half_width_99: f64,
    pub n_paths: u64,
    /// Sub-grid step, `None` when the scheme has no time discretisation.
    pub discretization: Option<f64>,
    /// Bound on the discounted mass beyond the horizon, not included in the CI.
    pub truncation_bound: f64,
}

impl SimEstimate {
    /// Whether `reference` lies within CI + truncation bound of the mean.
    pub fn covers(&self, reference: f64) -> bool {
        (self.mean - reference).abs() <= self.ci_half_width_99 + self.truncation_bound
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }

    pub fn estimate(&self, discretization: Option<f64>, truncation_bound: f64) -> SimEstimate {
        let half = if self.n == 0 { f64::INFINITY } else { Z99 * self.std() / (self.n as f64).sqrt() };
        SimEstimate { mean: self.mean, ci_half_width_99: half, n_paths: self.n, discretization, truncation_bound }
    }
}

/// Exact sampler of a phase-type variable by running its Markov chain.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    start: Vec<f64>,
    rates: Vec<f64>,
    // Cumulative probabilities over the m states followed by absorption.
    next: Vec<Vec<f64>>,
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

fn pick(cum: &[f64], u: f64) -> usize {
    let total = cum[cum.len() - 1];
    let target = u * total;
    cum.iter().position(|&c| target < c).unwrap_or(cum.len() - 1)
}

impl JumpSampler {
    pub fn new(ph: &PhaseType) -> Self {
        let m = ph.order();
        let t = ph.sub_generator();
        let exit = ph.exit();
        let start = cumulative(ph.alpha().iter().copied());
        let mut rates = Vec::with_capacity(m);
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let rate = -t[(i, i)];
            rates.push(rate);
            let row = (0..m).map(|j| if j == i { 0.0 } else { t[(i, j)] }).chain(core::iter::once(exit[i].max(0.0)));
            next.push(cumulative(row));
        }
        Self { start, rates, next }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.rates.len();
        let mut state = pick(&self.start, rng.random());
        let mut z = 0.0;
        loop {
            let e: f64 = Exp1.sample(rng);
            z += e / self.rates[state];
            let nxt = pick(&self.next[state], rng.random());
            if nxt == m {
                return z;
            }
            state = nxt;
        }
    }
}

/// Probability that a Brownian bridge with variance `var` between points at
/// distances `d0`, `d1` from a level reaches it.
pub fn bridge_cross_prob(d0: f64, d1: f64, var: f64) -> f64 {
    if d0 <= 0.0 || d1 <= 0.0 {
        1.0
    } else if var <= 0.0 {
        0.0
    } else {
        (-2.0 * d0 * d1 / var).exp()
    }
}

/// Maximum of a Brownian bridge from `y0` to `y1` with variance `var`.
pub fn bridge_max<R: Rng + ?Sized>(y0: f64, y1: f64, var: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let d = y1 - y0;
    0.5 * (y0 + y1 + (d * d - 2.0 * var * u.ln()).sqrt())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy)]
enum Top {
    Open,
    Reflect(f64),
    Absorb(f64),
}

#[derive(Debug, Clone, Copy)]
struct SegExit {
    upper: bool,
    // Unbiased estimate of e^{-q τ} relative to the segment start.
    disc: f64,
    at: f64,
}

#[derive(Debug, Clone, Copy)]
struct SegOut {
    free_end: f64,
    end: f64,
    paid: f64,
    paid_disc: f64,
    exit: Option<SegExit>,
}

impl SegOut {
    fn survive(y: f64) -> Self {
        Self { free_end: y, end: y, paid: 0.0, paid_disc: 0.0, exit: None }
    }
}

/// Brownian-with-drift segments between a lower absorbing level and an
/// optional upper level.
struct Segments {
    c: f64,
    sigma: f64,
    q: f64,
    lower: Option<f64>,
    top: Top,
    mode: Reflection,
    dt: f64,
    approx: u64,
}

impl Segments {
    fn run<R: Rng + ?Sized>(&mut self, rng: &mut R, dur: f64, u0: f64) -> SegOut {
        if dur <= 0.0 {
            return SegOut::survive(u0);
        }
        if self.sigma == 0.0 {
            // Linear descent; c > 0 is guaranteed for sigma = 0.
            let y1 = u0 - self.c * dur;
            if let Some(l) = self.lower {
                if y1 <= l {
                    let at = (u0 - l) / self.c;
                    let mut out = SegOut::survive(y1);
                    out.exit = Some(SegExit { upper: false, disc: (-self.q * at).exp(), at });
                    return out;
                }
            }
            return SegOut::survive(y1);
        }
        let y1 = u0 - self.c * dur + self.sigma * dur.sqrt() * normal(rng);
        self.rec(rng, dur, u0, y1)
    }

    fn rec<R: Rng + ?Sized>(&mut self, rng: &mut R, dur: f64, u0: f64, y1: f64) -> SegOut {
        let var = self.sigma * self.sigma * dur;
        let p_lo = self.lower.map_or(0.0, |l| bridge_cross_prob(u0 - l, y1 - l, var));
        let p_up = match self.top {
            Top::Open => 0.0,
            Top::Reflect(b) | Top::Absorb(b) => bridge_cross_prob(b - u0, b - y1, var),
        };
        let lo = p_lo > TINY;
        let up = p_up > TINY;
        if !lo && !up {
            return SegOut::survive(y1);
        }
        let split = match self.mode {
            Reflection::Grid => dur > self.dt,
            Reflection::Exact => lo && up && dur > MIN_SPLIT,
        };
        if split {
            let half = 0.5 * dur;
            let ym = 0.5 * (u0 + y1) + 0.5 * self.sigma * dur.sqrt() * normal(rng);
            let left = self.rec(rng, half, u0, ym);
            if left.exit.is_some() {
                return left;
            }
            let right = self.rec(rng, half, left.end, y1 - left.paid);
            let shift = (-self.q * half).exp();
            return SegOut {
                free_end: y1,
                end: right.end,
                paid: left.paid + right.paid,
                paid_disc: left.paid_disc + shift * right.paid_disc,
                exit: right.exit.map(|e| SegExit { disc: e.disc * shift, at: e.at + half, ..e }),
            };
        }
        match self.mode {
            Reflection::Grid => self.grid_leaf(rng, dur, y1, p_lo, p_up),
            Reflection::Exact => self.exact_leaf(rng, dur, u0, y1, p_lo, lo, up),
        }
    }

    fn grid_leaf<R: Rng + ?Sized>(&mut self, rng: &mut R, dur: f64, y1: f64, p_lo: f64, p_up: f64) -> SegOut {
        let disc = (-self.q * dur).exp();
        let mut out = SegOut::survive(y1);
        if p_lo > TINY && rng.random::<f64>() < p_lo {
            out.exit = Some(SegExit { upper: false, disc, at: dur });
            return out;
        }
        match self.top {
            Top::Reflect(b) if y1 > b => {
                out.paid = y1 - b;
                out.paid_disc = disc * out.paid;
                out.end = b;
            }
            Top::Absorb(_) if p_up > TINY && rng.random::<f64>() < p_up => {
                out.exit = Some(SegExit { upper: true, disc, at: dur });
            }
            _ => {}
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn exact_leaf<R: Rng + ?Sized>(&mut self, rng: &mut R, dur: f64, u0: f64, y1: f64, p_lo: f64, lo: bool, up: bool) -> SegOut {
        if lo && up {
            // Both levels in reach of a segment shorter than MIN_SPLIT.
            self.approx += 1;
            return self.grid_leaf(rng, dur, y1, p_lo, 1.0);
        }
        if lo {
            let l = self.lower.unwrap_or(0.0);
            return self.crossing(rng, dur, u0, y1, |y| y - l, false);
        }
        match self.top {
            Top::Absorb(b) => self.crossing(rng, dur, u0, y1, |y| b - y, true),
            Top::Reflect(b) => self.reflect(rng, dur, u0, y1, b),
            Top::Open => SegOut::survive(y1),
        }
    }

    /// First passage of a level within the segment, with an unbiased estimate
    /// of the discount factor at the passage time.
    fn crossing<R: Rng + ?Sized, D: Fn(f64) -> f64>(
        &mut self,
        rng: &mut R,
        dur: f64,
        u0: f64,
        y1: f64,
        dist: D,
        upper: bool,
    ) -> SegOut {
        let s2 = self.sigma * self.sigma;
        let v = dur * rng.random::<f64>();
        let yv = bridge_point(u0, y1, v, dur, self.sigma, rng);
        let end_disc = (-self.q * dur).exp();
        let early = self.q * dur * (-self.q * v).exp();
        let mut out = SegOut::survive(y1);
        if rng.random::<f64>() < bridge_cross_prob(dist(u0), dist(yv), s2 * v) {
            out.exit = Some(SegExit { upper, disc: end_disc + early, at: v });
        } else if rng.random::<f64>() < bridge_cross_prob(dist(yv), dist(y1), s2 * (dur - v)) {
            out.exit = Some(SegExit { upper, disc: end_disc, at: dur });
        }
        out
    }

    fn reflect<R: Rng + ?Sized>(&mut self, rng: &mut R, dur: f64, u0: f64, y1: f64, b: f64) -> SegOut {
        let s2 = self.sigma * self.sigma;
        let v = dur * rng.random::<f64>();
        let yv = bridge_point(u0, y1, v, dur, self.sigma, rng);
        let m1 = bridge_max(u0, yv, s2 * v, rng);
        let m2 = bridge_max(yv, y1, s2 * (dur - v), rng);
        let l_v = (m1 - b).max(0.0);
        let l_end = (m1.max(m2) - b).max(0.0);
        let mut out = SegOut::survive(y1);
        out.paid = l_end;
        out.paid_disc = (-self.q * dur).exp() * l_end + self.q * dur * (-self.q * v).exp() * l_v;
        out.end = y1 - l_end;
        if let Some(l) = self.lower {
            // U stays above the free path shifted down by the full push.
            let p = bridge_cross_prob(u0 - l_end - l, out.end - l, s2 * dur);
            if p > TINY {
                self.approx += 1;
                if rng.random::<f64>() < p {
                    out.exit = Some(SegExit { upper: false, disc: (-self.q * dur).exp(), at: dur });
                }
            }
        }
        out
    }
}

/// Brownian bridge value at time `s` of `[0, dur]` from `y0` to `y1`.
fn bridge_point<R: Rng + ?Sized>(y0: f64, y1: f64, s: f64, dur: f64, sigma: f64, rng: &mut R) -> f64 {
    let w = s / dur;
    let sd = sigma * (s * (dur - s) / dur).max(0.0).sqrt();
    y0 + w * (y1 - y0) + sd * normal(rng)
}

/// State of a controlled path, reported to a [`PathObserver`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub u: f64,
    pub x: f64,
    pub lp: f64,
    pub lc: f64,
}

/// Hook called at every event time of a controlled path.
pub trait PathObserver {
    fn observe(&mut self, _sample: &PathSample) {}
    fn periodic_payment(&mut self, _t: f64, _pre: f64, _amount: f64) {}
}

impl PathObserver for () {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// ∫ e^{-qt} dL_p.
    pub lp: f64,
    /// ∫ e^{-qt} dL_c.
    pub lc: f64,
    /// Ruin time, `None` when censored at the horizon.
    pub ruin_time: Option<f64>,
    pub approx_events: u64,
}

/// Simulation context shared by the paths of one run.
pub struct PathSimulator<'m> {
    model: &'m LevyModel,
    params: ProblemParams,
    config: SimConfig,
    jumps: Option<JumpSampler>,
}

impl<'m> PathSimulator<'m> {
    pub fn new(model: &'m LevyModel, params: ProblemParams, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let jumps = model.jump().map(JumpSampler::new);
        Ok(Self { model, params, config, jumps })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Per-path generator: stream `index` of the run seed.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        rng
    }

    /// One controlled path of U^{(a,b)}.
    pub fn path<R: Rng + ?Sized, O: PathObserver>(&self, rng: &mut R, obs: &mut O) -> PathOutcome {
        let cfg = &self.config;
        let q = self.params.q;
        let t_max = cfg.horizon(q);
        let a = cfg.barriers.a;
        let b = cfg.barriers.b;
        let rate_r = if cfg.barriers.periodic_active() { self.params.r } else { 0.0 };
        let rate_k = if self.jumps.is_some() { self.model.kappa() } else { 0.0 };
        let total = rate_r + rate_k;
        let mut seg = Segments {
            c: self.model.c(),
            sigma: self.model.sigma(),
            q,
            lower: Some(0.0),
            top: match b {
                Upper::Finite(b) => Top::Reflect(b),
                Upper::Infinite => Top::Open,
            },
            mode: cfg.reflection,
            dt: cfg.dt,
            approx: 0,
        };

        let mut t = 0.0;
        let mut u = cfg.x0;
        let mut x = cfg.x0;
        let (mut lp, mut lc, mut dlp, mut dlc) = (0.0, 0.0, 0.0, 0.0);
        if let Upper::Finite(b) = b {
            if u > b {
                lc += u - b;
                dlc += u - b;
                u = b;
            }
        }
        obs.observe(&PathSample { t, u, x, lp, lc });
        if u <= 0.0 {
            return PathOutcome { lp: dlp, lc: dlc, ruin_time: Some(0.0), approx_events: 0 };
        }
        loop {
            let gap = if total > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / total
            } else {
                f64::INFINITY
            };
            let at_horizon = t + gap >= t_max;
            let dur = if at_horizon { t_max - t } else { gap };
            let out = seg.run(rng, dur, u);
            let disc = (-q * t).exp();
            lc += out.paid;
            dlc += disc * out.paid_disc;
            if let Some(e) = out.exit {
                return PathOutcome { lp: dlp, lc: dlc, ruin_time: Some(t + e.at), approx_events: seg.approx };
            }
            x += out.free_end - u;
            u = out.end;
            t += dur;
            obs.observe(&PathSample { t, u, x, lp, lc });
            if at_horizon {
                return PathOutcome { lp: dlp, lc: dlc, ruin_time: None, approx_events: seg.approx };
            }
            let disc = (-q * t).exp();
            if rng.random::<f64>() * total < rate_k {
                let z = match &self.jumps {
                    Some(j) => j.sample(rng),
                    None => 0.0,
                };
                x += z;
                u += z;
                if let Upper::Finite(b) = b {
                    if u > b {
                        lc += u - b;
                        dlc += disc * (u - b);
                        u = b;
                    }
                }
            } else if u > a {
                obs.periodic_payment(t, u, u - a);
                lp += u - a;
                dlp += disc * (u - a);
                u = a;
            }
            obs.observe(&PathSample { t, u, x, lp, lc });
            if u <= 0.0 {
                return PathOutcome { lp: dlp, lc: dlc, ruin_time: Some(t), approx_events: seg.approx };
            }
        }
    }

    /// Bound on e^{-qT} E[dividends after T]: dividends after T are at most
    /// U(T) plus the discounted running supremum of the increments of X.
    pub fn truncation_bound(&self) -> f64 {
        let q = self.params.q;
        let cfg = &self.config;
        let t_max = cfg.horizon(q);
        let growth = self.model.kappa() * self.jumps.as_ref().map_or(0.0, |_| self.model.jump().map_or(0.0, PhaseType::mean));
        let level = match cfg.barriers.b {
            Upper::Finite(b) => b.max(cfg.x0),
            Upper::Infinite => cfg.barriers.a.max(cfg.x0) + growth * t_max + self.model.sigma() * t_max.sqrt(),
        };
        let scale = level + growth / q + self.model.sigma() / (2.0 * q).sqrt();
        self.params.beta.max(1.0) * scale * cfg.horizon_eps
    }

    /// Statistics of the paths in block `block`.
    pub fn block(&self, block: u64) -> ValueAccumulator {
        let mut acc = ValueAccumulator::default();
        let lo = block * BLOCK;
        let hi = (lo + BLOCK).min(self.config.paths);
        for i in lo..hi {
            let mut rng = self.rng(i);
            let out = self.path(&mut rng, &mut ());
            acc.push(&out, self.params.beta);
        }
        acc
    }

    pub fn finish(&self, acc: &ValueAccumulator) -> ValueEstimate {
        let disc = match self.config.reflection {
            Reflection::Exact => None,
            Reflection::Grid => Some(self.config.dt),
        };
        let tb = self.truncation_bound();
        ValueEstimate {
            vp: acc.vp.estimate(disc, tb),
            vc: acc.vc.estimate(disc, tb),
            v: acc.v.estimate(disc, tb),
            ruined: acc.ruined,
            approx_events: acc.approx_events,
        }
    }
}

/// Per-block sums for the value estimators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValueAccumulator {
    pub vp: Moments,
    pub vc: Moments,
    pub v: Moments,
    pub ruined: u64,
    pub approx_events: u64,
}

impl ValueAccumulator {
    pub fn push(&mut self, out: &PathOutcome, beta: f64) {
        self.vp.push(out.lp);
        self.vc.push(out.lc);
        self.v.push(out.lp + beta * out.lc);
        self.ruined += u64::from(out.ruin_time.is_some());
        self.approx_events += out.approx_events;
    }

    pub fn merge(&mut self, other: &ValueAccumulator) {
        self.vp.merge(&other.vp);
        self.vc.merge(&other.vc);
        self.v.merge(&other.v);
        self.ruined += other.ruined;
        self.approx_events += other.approx_events;
    }
}

/// Estimates of f_p, f_c and v = f_p + β f_c at one starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ValueEstimate {
    pub vp: SimEstimate,
    pub vc: SimEstimate,
    pub v: SimEstimate,
    /// Paths ruined before the horizon (touching 0 counts as ruin).
    pub ruined: u64,
    /// Segments where both barriers were in reach below the split limit.
    pub approx_events: u64,
}

/// Sequential estimate; blocks are reduced in order.
pub fn estimate_value(model: &LevyModel, params: &ProblemParams, config: &SimConfig) -> Result<ValueEstimate> {
    let sim = PathSimulator::new(model, *params, *config)?;
    let mut acc = ValueAccumulator::default();
    for k in 0..config.blocks() {
        acc.merge(&sim.block(k));
    }
    Ok(sim.finish(&acc))
}

/// Settings for the raw-path exit oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub paths: u64,
    pub seed: u64,
    pub horizon_eps: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { paths: 100_000, seed: 0, horizon_eps: 1e-10 }
    }
}

/// Monte Carlo and closed-form values of one exit functional.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OracleCheck {
    pub estimate: SimEstimate,
    pub closed_form: f64,
}

impl OracleCheck {
    pub fn passes(&self) -> bool {
        self.estimate.covers(self.closed_form)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ExitOracle {
    /// E_x[e^{-q τ_a^-}; τ_a^- < τ_b^+].
    pub down: OracleCheck,
    /// E_x[e^{-q τ_b^+ + θ(b - X(τ_b^+))}; τ_b^+ < τ_a^-].
    pub up: OracleCheck,
}

fn oracle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Two-sided exit of X from [a, b] started at x. Touching a counts as
/// passage below a; for σ > 0 or c > 0 the open and closed conventions
/// coincide, so x = a gives 1 for the first functional.
pub fn exit_oracle(model: &LevyModel, q: f64, a: f64, b: f64, x: f64, theta: f64, cfg: &OracleConfig) -> Result<ExitOracle> {
    if !(a <= x && x <= b && a < b) {
        bail!(Domain, "need a <= x <= b with a < b, got ({a}, {b}, {x})");
    }
    if !(q > 0.0) || !(theta >= 0.0) || cfg.paths == 0 {
        bail!(InvalidParameter, "need q > 0, theta >= 0 and paths >= 1");
    }
    let fam = ScaleFamily::build(model, q)?;
    let w_d = fam.w(b - a, 0);
    let w_x = fam.w(b - x, 0);
    let zt = |y: f64| if y <= 0.0 { (theta * y).exp() } else { fam.z_theta_sum(theta, model.psi(theta)).eval(y) };
    let down_cf = w_x / w_d;
    let up_cf = zt(b - x) - w_x * zt(b - a) / w_d;

    let jumps = model.jump().map(JumpSampler::new);
    let kappa = if jumps.is_some() { model.kappa() } else { 0.0 };
    let t_max = -cfg.horizon_eps.ln() / q;
    let mut seg = Segments {
        c: model.c(),
        sigma: model.sigma(),
        q,
        lower: Some(a),
        top: Top::Absorb(b),
        mode: Reflection::Exact,
        dt: 1.0,
        approx: 0,
    };
    let mut down = Moments::default();
    let mut up = Moments::default();
    for i in 0..cfg.paths {
        let mut rng = oracle_rng(cfg.seed, i);
        let (d, u) = exit_path(&mut seg, jumps.as_ref(), kappa, q, t_max, a, b, x, theta, &mut rng);
        down.push(d);
        up.push(u);
    }
    let tb = cfg.horizon_eps;
    Ok(ExitOracle {
        down: OracleCheck { estimate: down.estimate(None, tb), closed_form: down_cf },
        up: OracleCheck { estimate: up.estimate(None, tb), closed_form: up_cf },
    })
}

#[allow(clippy::too_many_arguments)]
fn exit_path<R: Rng + ?Sized>(
    seg: &mut Segments,
    jumps: Option<&JumpSampler>,
    kappa: f64,
    q: f64,
    t_max: f64,
    a: f64,
    b: f64,
    x: f64,
    theta: f64,
    rng: &mut R,
) -> (f64, f64) {
    if x <= a {
        return (1.0, 0.0);
    }
    if x >= b && seg.sigma > 0.0 {
        return (0.0, 1.0);
    }
    let mut t = 0.0;
    let mut y = x;
    loop {
        let gap = if kappa > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / kappa
        } else {
            f64::INFINITY
        };
        let at_horizon = t + gap >= t_max;
        let dur = if at_horizon { t_max - t } else { gap };
        let out = seg.run(rng, dur, y);
        if let Some(e) = out.exit {
            let w = (-q * t).exp() * e.disc;
            return if e.upper { (0.0, w) } else { (w, 0.0) };
        }
        if at_horizon {
            return (0.0, 0.0);
        }
        t += dur;
        y = out.end;
        if let Some(j) = jumps {
            y += j.sample(rng);
        }
        if y > b {
            return (0.0, (-q * t - theta * (y - b)).exp());
        }
    }
}

/// E_b[e^{-q(η_a^- ∧ e_r)}] for X reflected from above at b, where η_a^- is
/// the first passage below a and e_r an independent exponential time.
pub fn reflected_exit_oracle(model: &LevyModel, q: f64, r: f64, a: f64, b: f64, cfg: &OracleConfig) -> Result<OracleCheck> {
    if !(0.0 <= a && a < b) {
        bail!(Domain, "need 0 <= a < b, got ({a}, {b})");
    }
    if !(q > 0.0) || !(r >= 0.0) || cfg.paths == 0 {
        bail!(InvalidParameter, "need q > 0, r >= 0 and paths >= 1");
    }
    let fqr = ScaleFamily::build(model, q + r)?;
    let closed_form = (r + q / fqr.z(b - a)) / (r + q);

    let jumps = model.jump().map(JumpSampler::new);
    let kappa = if jumps.is_some() { model.kappa() } else { 0.0 };
    let total = kappa + r;
    let t_max = -cfg.horizon_eps.ln() / q;
    let mut seg = Segments {
        c: model.c(),
        sigma: model.sigma(),
        q,
        lower: Some(a),
        top: Top::Reflect(b),
        mode: Reflection::Exact,
        dt: 1.0,
        approx: 0,
    };
    let mut m = Moments::default();
    for i in 0..cfg.paths {
        let mut rng = oracle_rng(cfg.seed, i);
        let mut t = 0.0;
        let mut y = b;
        let value = loop {
            let gap = if total > 0.0 {
                let e: f64 = Exp1.sample(&mut rng);
                e / total
            } else {
                f64::INFINITY
            };
            let at_horizon = t + gap >= t_max;
            let dur = if at_horizon { t_max - t } else { gap };
            let out = seg.run(&mut rng, dur, y);
            if let Some(e) = out.exit {
                break (-q * t).exp() * e.disc;
            }
            if at_horizon {
                break 0.0;
            }
            t += dur;
            y = out.end;
            if rng.random::<f64>() * total < r {
                break (-q * t).exp();
            }
            if let Some(j) = &jumps {
                y = (y + j.sample(&mut rng)).min(b);
            }
        };
        m.push(value);
    }
    Ok(OracleCheck { estimate: m.estimate(None, cfg.horizon_eps), closed_form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::optimizer;
    use crate::scale::ScaleEngine;
    use crate::valuation::{self, BarrierFunctions};

    #[test]
    fn bridge_max_is_above_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let y0: f64 = rng.random::<f64>() - 0.5;
            let y1: f64 = rng.random::<f64>() - 0.5;
            let m = bridge_max(y0, y1, 0.3, &mut rng);
            assert!(m >= y0.max(y1) - 1e-15);
        }
    }

    #[test]
    fn bridge_max_matches_crossing_probability() {
        // P(max >= h) for the sampled maximum equals the closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (y0, y1, var, h) = (0.0, 0.2, 0.5, 0.6);
        let n = 200_000;
        let hits = (0..n).filter(|_| bridge_max(y0, y1, var, &mut rng) >= h).count();
        let p = hits as f64 / n as f64;
        let want = bridge_cross_prob(h - y0, h - y1, var);
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((p - want).abs() < 4.0 * se, "{p} vs {want}");
    }

    #[test]
    fn jump_sampler_mean() {
        let ph = cases::folded_normal_ph();
        let s = JumpSampler::new(&ph);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut m = Moments::default();
        for _ in 0..n {
            m.push(s.sample(&mut rng));
        }
        let se = m.std() / (n as f64).sqrt();
        assert!((m.mean() - ph.mean()).abs() < 4.0 * se, "{} vs {}", m.mean(), ph.mean());
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let data: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Moments::default();
        data.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        data[..37].iter().for_each(|&x| a.push(x));
        data[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.n(), all.n());
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.std() - all.std()).abs() < 1e-13);
    }

    #[derive(Default)]
    struct Books {
        worst: f64,
        over_b: f64,
        bad_payment: bool,
        samples: usize,
        b: f64,
        a: f64,
        last_lp: f64,
    }

    impl PathObserver for Books {
        fn observe(&mut self, s: &PathSample) {
            let scale = 1.0f64.max(s.x.abs()).max(s.lp + s.lc);
            let gap = (s.u + s.lp + s.lc - s.x).abs() / scale;
            self.worst = self.worst.max(gap);
            self.over_b = self.over_b.max(s.u - self.b);
            if s.lp < self.last_lp {
                self.bad_payment = true;
            }
            self.last_lp = s.lp;
            self.samples += 1;
        }

        fn periodic_payment(&mut self, _t: f64, pre: f64, amount: f64) {
            if !(pre > self.a) || (pre - amount - self.a).abs() > 1e-12 {
                self.bad_payment = true;
            }
        }
    }

    #[test]
    fn decomposition_bookkeeping() {
        let model = cases::case1_model();
        let params = cases::params(0.6).unwrap();
        for mode in [Reflection::Exact, Reflection::Grid] {
            let mut cfg = SimConfig::new(1.0, Barriers::hybrid(1.5, 3.0));
            cfg.reflection = mode;
            cfg.horizon_eps = 0.05;
            let sim = PathSimulator::new(&model, params, cfg).unwrap();
            for i in 0..50 {
                let mut books = Books { b: 3.0, a: 1.5, ..Books::default() };
                sim.path(&mut sim.rng(i), &mut books);
                assert!(books.worst < 1e-12, "{mode:?}: {}", books.worst);
                assert!(books.over_b <= 1e-12, "{mode:?}: {}", books.over_b);
                assert!(!books.bad_payment);
                assert!(books.samples >= 1);
            }
        }
    }

    #[test]
    fn degenerate_strategies() {
        let model = cases::case1_model();
        let params = cases::params(0.6).unwrap();
        let mut cfg = SimConfig::new(2.0, Barriers::continuous(3.0));
        cfg.horizon_eps = 1e-3;
        let sim = PathSimulator::new(&model, params, cfg).unwrap();
        for i in 0..20 {
            let out = sim.path(&mut sim.rng(i), &mut ());
            assert_eq!(out.lp, 0.0);
        }
        let cfg = SimConfig { barriers: Barriers::periodic(1.0), ..cfg };
        let sim = PathSimulator::new(&model, params, cfg).unwrap();
        for i in 0..20 {
            let out = sim.path(&mut sim.rng(i), &mut ());
            assert_eq!(out.lc, 0.0);
        }
    }

    #[test]
    fn zero_periodic_barrier_liquidates_at_first_decision() {
        let model = cases::case2_model();
        let params = cases::params(0.6).unwrap();
        let mut cfg = SimConfig::new(1.0, Barriers::hybrid(0.0, 3.0));
        cfg.horizon_eps = 1e-3;
        let sim = PathSimulator::new(&model, params, cfg).unwrap();
        struct First(Option<(f64, f64)>);
        impl PathObserver for First {
            fn periodic_payment(&mut self, t: f64, pre: f64, amount: f64) {
                if self.0.is_none() {
                    self.0 = Some((t, pre - amount));
                }
            }
        }
        for i in 0..50 {
            let mut first = First(None);
            let out = sim.path(&mut sim.rng(i), &mut first);
            if let Some((t, after)) = first.0 {
                assert_eq!(after, 0.0);
                assert_eq!(out.ruin_time, Some(t));
            }
        }
    }

    #[test]
    fn reproducible() {
        let model = cases::case1_model();
        let params = cases::params(0.6).unwrap();
        let mut cfg = SimConfig::new(1.0, Barriers::hybrid(2.0, 4.0));
        cfg.paths = 300;
        cfg.seed = 9;
        let a = estimate_value(&model, &params, &cfg).unwrap();
        let b = estimate_value(&model, &params, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 10;
        let c = estimate_value(&model, &params, &cfg).unwrap();
        assert_ne!(a.v.mean, c.v.mean);
    }

    #[test]
    fn zero_start_is_ruined() {
        let model = cases::case1_model();
        let params = cases::params(0.6).unwrap();
        let mut cfg = SimConfig::new(0.0, Barriers::hybrid(2.0, 4.0));
        cfg.paths = 10;
        let est = estimate_value(&model, &params, &cfg).unwrap();
        assert_eq!(est.v.mean, 0.0);
        assert_eq!(est.ruined, 10);
    }

    #[test]
    fn value_matches_closed_form_at_suboptimal_barriers() {
        let model = cases::case1_model();
        let params = cases::params(0.6).unwrap();
        let engine = ScaleEngine::build(&model, params.q, params.r).unwrap();
        let (a, b, x) = (1.0, 2.5, 1.5);
        let bf = BarrierFunctions::new(params, &engine, a, b).unwrap();
        let mut cfg = SimConfig::new(x, Barriers::hybrid(a, b));
        cfg.paths = 6000;
        cfg.seed = 4;
        let est = estimate_value(&model, &params, &cfg).unwrap();
        assert!(est.vp.covers(bf.f_p(x)), "{:?} vs {}", est.vp, bf.f_p(x));
        assert!(est.vc.covers(bf.f_c(x)), "{:?} vs {}", est.vc, bf.f_c(x));
        assert!(est.v.covers(bf.value(x)), "{:?} vs {}", est.v, bf.value(x));
    }

    #[test]
    fn pure_regimes_match_closed_form() {
        let model = cases::case1_model();
        let x = 1.0;
        let params = cases::params(0.4).unwrap();
        let sol = optimizer::solve(&params, &model).unwrap();
        let engine = ScaleEngine::build(&model, params.q, params.r).unwrap();
        let want = optimizer::value_function(&sol, &engine).unwrap().value(x);
        let mut cfg = SimConfig::new(x, Barriers::from_solution(&sol));
        cfg.paths = 3000;
        cfg.seed = 5;
        let est = estimate_value(&model, &params, &cfg).unwrap();
        assert!(est.v.covers(want), "{:?} vs {want}", est.v);

        let params = cases::params(1.2).unwrap();
        let b = valuation::continuous_barrier(&params, &engine).unwrap();
        let want = valuation::value_continuous_barrier(&params, &engine, b).unwrap().value(x);
        let cfg = SimConfig { barriers: Barriers::continuous(b), ..cfg };
        let est = estimate_value(&model, &params, &cfg).unwrap();
        assert!(est.v.covers(want), "{:?} vs {want}", est.v);
    }

    #[test]
    fn exit_identities_brownian() {
        let model = LevyModel::new_unrestricted(-0.3, 0.5, 0.0, None).unwrap();
        let cfg = OracleConfig { paths: 20_000, seed: 6, horizon_eps: 1e-10 };
        let o = exit_oracle(&model, 0.1, 0.0, 1.5, 0.7, 0.0, &cfg).unwrap();
        assert!(o.down.passes(), "{:?}", o.down);
        assert!(o.up.passes(), "{:?}", o.up);
        let at_a = exit_oracle(&model, 0.1, 0.0, 1.5, 0.0, 0.0, &cfg).unwrap();
        assert_eq!(at_a.down.estimate.mean, 1.0);
        assert!((at_a.down.closed_form - 1.0).abs() < 1e-14);
    }
}
