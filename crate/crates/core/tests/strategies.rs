use dualdiv_core::optimizer::{self, SweepVariable};
use dualdiv_core::valuation::{self, BarrierFunctions};
use dualdiv_core::verify;
use dualdiv_core::{cases, ProblemParams, Regime, ScaleEngine, Side};
use proptest::prelude::*;

fn engine(model: &dualdiv_core::LevyModel) -> ScaleEngine {
    ScaleEngine::build(model, 0.05, 0.05).unwrap()
}

#[test]
fn slope_conditions_at_the_barriers() {
    for model in [cases::case1_model(), cases::case2_model()] {
        let e = engine(&model);
        let p = cases::params(0.6).unwrap();
        let sol = optimizer::solve_with_engine(&p, &e).unwrap();
        let vf = optimizer::value_function(&sol, &e).unwrap();
        let b = sol.b_star.finite().unwrap();
        assert!((vf.deriv(b, 1, Side::Left) - p.beta).abs() < 1e-8);
        if sol.a_star > 0.0 {
            assert!((vf.deriv(sol.a_star, 1, Side::Left) - 1.0).abs() < 1e-8);
        } else {
            assert!(vf.deriv(0.0, 1, Side::Right) <= 1.0 + 1e-8);
        }
    }
}

#[test]
fn decomposition_on_a_grid() {
    let e = engine(&cases::case1_model());
    let p = cases::params(0.7).unwrap();
    let bf = BarrierFunctions::new(p, &e, 1.5, 4.0).unwrap();
    for i in 0..=60 {
        let x = 0.1 * i as f64;
        assert!((bf.f_p(x) + p.beta * bf.f_c(x) - bf.value(x)).abs() < 1e-9);
    }
}

#[test]
fn periodic_slope_dominates_its_weight() {
    let e = engine(&cases::case1_model());
    let p = cases::params(0.4).unwrap();
    let sol = optimizer::solve_with_engine(&p, &e).unwrap();
    assert_eq!(sol.regime, Regime::PurePeriodic);
    let vf = optimizer::value_function(&sol, &e).unwrap();
    let w = p.r / (p.r + p.q);
    for i in 1..=200 {
        let x = 0.05 * i as f64;
        assert!(vf.deriv(x, 1, Side::Right) >= w - 1e-12, "x = {x}");
    }
}

#[test]
fn b_star_diverges_at_the_periodic_threshold() {
    let model = cases::case1_model();
    let base = cases::params(0.6).unwrap();
    let betas = [0.5005, 0.501, 0.505, 0.52];
    let sols = optimizer::sweep(&base, &model, SweepVariable::Beta, &betas).unwrap();
    let bs: Vec<f64> = sols.iter().map(|s| s.b_star.finite().unwrap()).collect();
    assert!(bs.windows(2).all(|w| w[0] > w[1]), "{bs:?}");
    assert!(bs[0] > bs[3] + 3.0, "{bs:?}");
    // same threshold approached through r: q β/(1 - β) = 0.075
    let rs = [0.06, 0.07, 0.074, 0.0749];
    let sols = optimizer::sweep(&base, &model, SweepVariable::R, &rs).unwrap();
    let bs: Vec<f64> = sols.iter().map(|s| s.b_star.finite().unwrap()).collect();
    assert!(bs.windows(2).all(|w| w[0] < w[1]), "{bs:?}");
}

#[test]
fn gap_closes_as_beta_reaches_one() {
    let model = cases::case1_model();
    let base = cases::params(0.6).unwrap();
    let betas = [0.9, 0.99, 0.999, 0.9999];
    let sols = optimizer::sweep(&base, &model, SweepVariable::Beta, &betas).unwrap();
    let gaps: Vec<f64> = sols.iter().map(|s| s.b_star.finite().unwrap() - s.a_star).collect();
    assert!(gaps.windows(2).all(|w| w[0] > w[1]), "{gaps:?}");
    assert!(gaps[3] < 1e-2);
    let e = engine(&model);
    let bc = valuation::continuous_barrier(&ProblemParams::new(0.05, 0.05, 1.0).unwrap(), &e).unwrap();
    assert!((sols[3].b_star.finite().unwrap() - bc).abs() < 1e-2);
}

#[test]
fn solutions_satisfy_their_invariants() {
    let model = cases::case1_model();
    let base = cases::params(0.6).unwrap();
    let betas = [0.55, 0.6, 0.7, 0.8, 0.9];
    for s in optimizer::sweep(&base, &model, SweepVariable::Beta, &betas).unwrap() {
        let b = s.b_star.finite().unwrap();
        assert!(0.0 <= s.a_star && s.a_star < b);
        assert!(s.diagnostics.gamma_residual.abs() < 1e-8);
        assert!(s.diagnostics.b0.unwrap() <= b + 1e-8);
        assert!(b - s.a_star <= s.epsilon.unwrap() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimum_dominates_other_pairs(a in 0.0f64..6.0, d in 0.0f64..4.0, case2 in any::<bool>()) {
        let model = if case2 { cases::case2_model() } else { cases::case1_model() };
        let e = engine(&model);
        let p = cases::params(0.6).unwrap();
        let sol = optimizer::solve_with_engine(&p, &e).unwrap();
        let b_star = sol.b_star.finite().unwrap();
        let opt = BarrierFunctions::new(p, &e, sol.a_star, b_star).unwrap();
        let b = a + d;
        let sub: Box<dyn Fn(f64) -> f64> = if d > 0.0 {
            let bf = BarrierFunctions::new(p, &e, a, b).unwrap();
            Box::new(move |x| bf.value(x))
        } else {
            let vf = valuation::value_continuous_barrier(&p, &e, b).unwrap();
            Box::new(move |x| vf.value(x))
        };
        for i in 0..50 {
            let x = 2.0 * b_star * i as f64 / 49.0;
            prop_assert!(opt.value(x) >= sub(x) - 1e-9, "x = {}", x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn lump_sum_gain_matches_search(x in 0.0f64..10.0) {
        let e = engine(&cases::case1_model());
        let p = cases::params(0.6).unwrap();
        let sol = optimizer::solve_with_engine(&p, &e).unwrap();
        let b = sol.b_star.finite().unwrap();
        let vf = optimizer::value_function(&sol, &e).unwrap();
        let closed = valuation::m_fn(&p, &e, sol.a_star, b, x);
        let search = verify::lump_sum_search(&vf, x, 400);
        prop_assert!((closed - search).abs() < 1e-6, "{} vs {}", closed, search);
    }
}
