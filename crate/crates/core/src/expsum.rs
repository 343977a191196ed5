//! Finite sums of `coeff * x^power * exp(rate * x + log_scale)` with complex
//! coefficients and rates, and piecewise functions built from them.
//!
//! Sums built from conjugate-closed root sets stay conjugate-closed under
//! every operation here, so evaluation at real `x` returns the real part.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// Rates closer than this are merged by the convolution limit formula.
pub const RATE_COINCIDENCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: Complex64,
    pub rate: Complex64,
    pub power: u32,
    /// Real exponent folded into the coefficient. Shifts and reflections
    /// move `Re(rate * d)` here instead of multiplying it out, so steep
    /// rates far from the origin neither overflow nor underflow.
    pub log_scale: f64,
}

impl Term {
    pub fn new(coeff: Complex64, rate: Complex64, power: u32) -> Self {
        Self { coeff, rate, power, log_scale: 0.0 }
    }

    /// coeff * e^{log_scale}.
    pub fn weight(&self) -> Complex64 {
        self.coeff * self.log_scale.exp()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpSum {
    terms: Vec<Term>,
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn cpowi(z: Complex64, n: i32) -> Complex64 {
    if n >= 0 {
        (0..n).fold(Complex64::new(1.0, 0.0), |acc, _| acc * z)
    } else {
        Complex64::new(1.0, 0.0) / cpowi(z, -n)
    }
}

impl ExpSum {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms([Term::new(Complex64::new(c, 0.0), ZERO, 0)])
    }

    /// `c * x`.
    pub fn linear(c: f64) -> Self {
        Self::from_terms([Term::new(Complex64::new(c, 0.0), ZERO, 1)])
    }

    /// `coeff * exp(rate * x)`.
    pub fn exponential(coeff: Complex64, rate: Complex64) -> Self {
        Self::from_terms([Term::new(coeff, rate, 0)])
    }

    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I) -> Self {
        let mut s = Self { terms: Vec::new() };
        for t in terms {
            s.push(t);
        }
        s
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds a term, merging with an existing one of identical rate and power.
    pub fn push(&mut self, t: Term) {
        if t.coeff == ZERO {
            return;
        }
        if let Some(e) = self.terms.iter_mut().find(|e| e.rate == t.rate && e.power == t.power) {
            if e.log_scale == t.log_scale {
                e.coeff += t.coeff;
            } else {
                let l = e.log_scale.max(t.log_scale);
                e.coeff = e.coeff * (e.log_scale - l).exp() + t.coeff * (t.log_scale - l).exp();
                e.log_scale = l;
            }
        } else {
            self.terms.push(t);
        }
    }

    pub fn eval_complex(&self, x: f64) -> Complex64 {
        let mut acc = ZERO;
        for t in &self.terms {
            let e = if t.rate == ZERO { Complex64::new(t.log_scale.exp(), 0.0) } else { (t.rate * x + t.log_scale).exp() };
            let xp = if t.power == 0 { 1.0 } else { x.powi(t.power as i32) };
            acc += t.coeff * e * xp;
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_complex(x).re
    }

    /// n-th derivative evaluated at x.
    pub fn eval_deriv(&self, x: f64, order: u32) -> f64 {
        let mut d = self.clone();
        for _ in 0..order {
            d = d.derivative();
        }
        d.eval(x)
    }

    pub fn derivative(&self) -> Self {
        let mut out = Self::zero();
        for t in &self.terms {
            if t.rate != ZERO {
                out.push(Term { coeff: t.coeff * t.rate, ..*t });
            }
            if t.power > 0 {
                out.push(Term { coeff: t.coeff * t.power as f64, power: t.power - 1, ..*t });
            }
        }
        out
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Self {
        let mut out = Self::zero();
        for t in &self.terms {
            let n = t.power;
            if t.rate.norm() < 1e-12 {
                out.push(Term { coeff: t.coeff / (n + 1) as f64, power: n + 1, ..*t });
                continue;
            }
            // ∫_0^x y^n e^{ζy} dy = e^{ζx} Σ_k (-1)^{n-k} n!/(k! ζ^{n-k+1}) x^k - (-1)^n n!/ζ^{n+1}
            let nf = factorial(n);
            for k in 0..=n {
                let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
                let c = t.coeff * sign * nf / factorial(k) / cpowi(t.rate, (n - k + 1) as i32);
                out.push(Term { coeff: c, power: k, ..*t });
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            out.push(Term { coeff: -t.coeff * sign * nf / cpowi(t.rate, (n + 1) as i32), rate: ZERO, power: 0, ..*t });
        }
        out
    }

    /// x ↦ f(x + d).
    pub fn shift(&self, d: f64) -> Self {
        let mut out = Self::zero();
        for t in &self.terms {
            let rd = t.rate * d;
            let e = t.coeff * Complex64::new(0.0, rd.im).exp();
            let log_scale = t.log_scale + rd.re;
            for k in 0..=t.power {
                let c = e * binomial(t.power, k) * d.powi((t.power - k) as i32);
                out.push(Term { coeff: c, rate: t.rate, power: k, log_scale });
            }
        }
        out
    }

    /// x ↦ f(a - x).
    pub fn reflect(&self, a: f64) -> Self {
        let mut out = Self::zero();
        for t in &self.terms {
            let ra = t.rate * a;
            let e = t.coeff * Complex64::new(0.0, ra.im).exp();
            let log_scale = t.log_scale + ra.re;
            for k in 0..=t.power {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let c = e * binomial(t.power, k) * a.powi((t.power - k) as i32) * sign;
                out.push(Term { coeff: c, rate: -t.rate, power: k, log_scale });
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| Term { coeff: t.coeff * s, ..*t }))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(*t);
        }
        out
    }

    /// self + s * other
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(Term { coeff: t.coeff * s, ..*t });
        }
        out
    }

    /// (f * g)(x) = ∫_0^x f(x - y) g(y) dy, exactly.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for f in &self.terms {
            for g in &other.terms {
                conv_terms(f, g, &mut out);
            }
        }
        out
    }

    /// ∫_0^∞ e^{-θx} f(x) dx, valid for θ beyond every Re(rate).
    pub fn laplace(&self, theta: f64) -> f64 {
        let th = Complex64::new(theta, 0.0);
        let mut acc = ZERO;
        for t in &self.terms {
            acc += t.weight() * factorial(t.power) / cpowi(th - t.rate, t.power as i32 + 1);
        }
        acc.re
    }

    /// Largest relative imaginary part over the given sample points.
    pub fn imaginary_residue(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let v = self.eval_complex(x);
                let scale: f64 = self
                    .terms
                    .iter()
                    .map(|t| (t.coeff * (t.rate * x + t.log_scale).exp()).norm() * x.abs().powi(t.power as i32))
                    .sum();
                v.im.abs() / scale.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

fn conv_terms(f: &Term, g: &Term, out: &mut ExpSum) {
    let (m, n) = (f.power, g.power);
    let c = f.coeff * g.coeff * factorial(m) * factorial(n);
    let log_scale = f.log_scale + g.log_scale;
    let (a, b) = (f.rate, g.rate);
    let diff = a - b;
    if diff.norm() <= RATE_COINCIDENCE * a.norm().max(1.0) {
        let rate = (a + b) * 0.5;
        out.push(Term { coeff: c / factorial(m + n + 1), rate, power: m + n + 1, log_scale });
        return;
    }
    // Partial fractions of m! n! / ((s-a)^M (s-b)^N), M = m+1, N = n+1.
    let (mm, nn) = (m + 1, n + 1);
    for k in 1..=mm {
        let j = mm - k;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let coef = c * sign * binomial(nn + j - 1, j) * cpowi(diff, -((nn + j) as i32)) / factorial(k - 1);
        out.push(Term { coeff: coef, rate: a, power: k - 1, log_scale });
    }
    for k in 1..=nn {
        let j = nn - k;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let coef = c * sign * binomial(mm + j - 1, j) * cpowi(-diff, -((mm + j) as i32)) / factorial(k - 1);
        out.push(Term { coeff: coef, rate: b, power: k - 1, log_scale });
    }
}

/// Which one-sided limit to take at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Piecewise function: `pieces[k]` applies on `[breaks[k-1], breaks[k])`
/// with the outer pieces unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise {
    breaks: Vec<f64>,
    pieces: Vec<ExpSum>,
}

impl Piecewise {
    pub fn new(breaks: Vec<f64>, pieces: Vec<ExpSum>) -> Self {
        assert_eq!(pieces.len(), breaks.len() + 1, "piece count must be break count + 1");
        assert!(breaks.windows(2).all(|w| w[0] < w[1]), "breaks must be strictly increasing");
        Self { breaks, pieces }
    }

    pub fn single(f: ExpSum) -> Self {
        Self { breaks: Vec::new(), pieces: alloc::vec![f] }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[ExpSum] {
        &self.pieces
    }

    pub fn piece_index(&self, x: f64, side: Side) -> usize {
        match side {
            Side::Right => self.breaks.iter().take_while(|&&b| b <= x).count(),
            Side::Left => self.breaks.iter().take_while(|&&b| b < x).count(),
        }
    }

    pub fn piece_at(&self, x: f64) -> &ExpSum {
        &self.pieces[self.piece_index(x, Side::Right)]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.piece_at(x).eval(x)
    }

    pub fn eval_side(&self, x: f64, side: Side) -> f64 {
        self.pieces[self.piece_index(x, side)].eval(x)
    }

    pub fn eval_deriv(&self, x: f64, order: u32, side: Side) -> f64 {
        self.pieces[self.piece_index(x, side)].eval_deriv(x, order)
    }

    pub fn derivative(&self) -> Self {
        Self { breaks: self.breaks.clone(), pieces: self.pieces.iter().map(ExpSum::derivative).collect() }
    }

    pub fn map(&self, f: impl Fn(&ExpSum) -> ExpSum) -> Self {
        Self { breaks: self.breaks.clone(), pieces: self.pieces.iter().map(f).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|p| p.scale(s))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let k = ExpSum::constant(c);
        self.map(|p| p.add(&k))
    }

    /// x ↦ f(x + d).
    pub fn shift(&self, d: f64) -> Self {
        Self { breaks: self.breaks.iter().map(|b| b - d).collect(), pieces: self.pieces.iter().map(|p| p.shift(d)).collect() }
    }

    /// x ↦ f(a - x).
    pub fn reflect(&self, a: f64) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().map(|b| a - b).collect();
        breaks.reverse();
        let mut pieces: Vec<ExpSum> = self.pieces.iter().map(|p| p.reflect(a)).collect();
        pieces.reverse();
        Self { breaks, pieces }
    }

    /// self + s * other over the union of breakpoints.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(other.breaks.iter()).copied().collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
        breaks.dedup();
        let mut pieces = Vec::with_capacity(breaks.len() + 1);
        for k in 0..=breaks.len() {
            let probe = match (k, breaks.len()) {
                (_, 0) => 0.0,
                (0, _) => breaks[0] - 1.0,
                (k, n) if k == n => breaks[n - 1] + 1.0,
                (k, _) => 0.5 * (breaks[k - 1] + breaks[k]),
            };
            pieces.push(self.piece_at(probe).axpy(s, other.piece_at(probe)));
        }
        Self { breaks, pieces }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }
}
