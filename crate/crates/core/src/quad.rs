//! Adaptive Gauss–Kronrod (7/15) quadrature.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_panels: 4000 }
    }
}

/// Integrates `f` over `[a, b]` by globally adaptive bisection of the panel
/// with the largest error estimate.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    panels.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if panels.len() >= opts.max_panels {
            bail!(NumericFailure, "quadrature on [{a}, {b}] did not converge (error estimate {err:e})");
        }
        let (idx, _) = panels.iter().enumerate().fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            bail!(NumericFailure, "quadrature panel collapsed near {pa}");
        }
        let (v1, e1) = gk15(&mut f, pa, mid);
        let (v2, e2) = gk15(&mut f, mid, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
    // Re-sum to shed the drift of the running updates.
    Ok(panels.iter().map(|p| p.2).sum())
}

/// Integrates over consecutive sub-intervals given by `breaks` (sorted).
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], opts: QuadOptions) -> Result<f64> {
    let mut sum = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            sum += integrate(&mut f, w[0], w[1], opts)?;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn kinked_integrand() {
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn oscillatory() {
        let v = integrate(|x: f64| (10.0 * x).sin(), 0.0, core::f64::consts::PI, QuadOptions::default()).unwrap();
        assert!(v.abs() < 1e-10);
    }
}
