use dualdiv_core::sim::{self, Barriers, OracleConfig, Reflection, SimConfig};
use dualdiv_core::valuation::BarrierFunctions;
use dualdiv_core::{cases, LevyModel, ScaleEngine};

fn hybrid_config(x0: f64, paths: u64, dt: f64) -> SimConfig {
    let mut cfg = SimConfig::new(x0, Barriers::hybrid(2.0, 4.5));
    cfg.paths = paths;
    cfg.dt = dt;
    cfg.seed = 11;
    cfg
}

#[test]
fn halving_dt_on_the_grid_scheme() {
    let model = cases::case1_model();
    let params = cases::params(0.6).unwrap();
    let mut coarse = hybrid_config(1.0, 20_000, 1e-3);
    coarse.reflection = Reflection::Grid;
    let fine = SimConfig { dt: 5e-4, ..coarse };
    let a = sim::estimate_value(&model, &params, &coarse).unwrap();
    let b = sim::estimate_value(&model, &params, &fine).unwrap();
    for (x, y) in [(a.vp, b.vp), (a.vc, b.vc), (a.v, b.v)] {
        assert_eq!(x.discretization, Some(1e-3));
        assert!((x.mean - y.mean).abs() < y.ci_half_width_99, "{} vs {} ± {}", x.mean, y.mean, y.ci_half_width_99);
    }
}

#[test]
fn grid_scheme_agrees_with_closed_form() {
    let model = cases::case1_model();
    let params = cases::params(0.6).unwrap();
    let e = ScaleEngine::build(&model, 0.05, 0.05).unwrap();
    let bf = BarrierFunctions::new(params, &e, 2.0, 4.5).unwrap();
    let mut cfg = hybrid_config(2.0, 20_000, 1e-3);
    cfg.reflection = Reflection::Grid;
    let est = sim::estimate_value(&model, &params, &cfg).unwrap();
    assert!(est.v.covers(bf.value(2.0)), "{:?} vs {}", est.v, bf.value(2.0));
}

#[test]
fn estimates_are_bit_reproducible() {
    let model = cases::case2_model();
    let params = cases::params(0.6).unwrap();
    let cfg = hybrid_config(1.0, 3_000, 1e-3);
    let a = sim::estimate_value(&model, &params, &cfg).unwrap();
    let b = sim::estimate_value(&model, &params, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.v.mean.to_bits(), b.v.mean.to_bits());
    let other = sim::estimate_value(&model, &params, &SimConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.v.mean, other.v.mean);
}

#[test]
fn reflected_exit_at_other_levels() {
    let model = cases::case2_model();
    let cfg = OracleConfig { paths: 50_000, seed: 5, ..OracleConfig::default() };
    let c = sim::reflected_exit_oracle(&model, 0.05, 0.2, 0.5, 2.5, &cfg).unwrap();
    assert!(c.passes(), "{c:?}");
}

#[test]
fn brownian_exit_identities() {
    let model = LevyModel::new_unrestricted(0.3, 0.5, 0.0, None).unwrap();
    let cfg = OracleConfig { paths: 50_000, seed: 9, ..OracleConfig::default() };
    let o = sim::exit_oracle(&model, 0.1, 0.5, 2.0, 1.2, 0.3, &cfg).unwrap();
    assert!(o.down.passes(), "{:?}", o.down);
    assert!(o.up.passes(), "{:?}", o.up);
}
