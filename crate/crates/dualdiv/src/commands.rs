//! The five subcommands. Each writes `resolved_config.json` to the output
//! directory before doing any work.

use std::fs;
use std::path::{Path, PathBuf};

use dualdiv_core::optimizer::{self, Diagnostics, HybridSolution, SweepVariable};
use dualdiv_core::sim::{Barriers, PathSimulator, SimEstimate, ValueEstimate};
use dualdiv_core::valuation::{self, BarrierFunctions};
use dualdiv_core::verify::{self, HjbReport};
use dualdiv_core::{LevyModel, ProblemParams, Regime, ScaleEngine, Upper};
use serde::Serialize;

use crate::config::{RunConfig, SweepVar};
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, write_csv, write_json};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Curves,
    Sweep,
    Simulate,
    Verify,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Violation,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Violation => 1,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
    model: LevyModel,
    params: ProblemParams,
    engine: ScaleEngine,
}

impl Ctx {
    fn new(cfg: RunConfig, out: &Path) -> Result<Self, CliError> {
        cfg.validate()?;
        let model = cfg.levy_model()?;
        let params = cfg.problem_params()?;
        fs::create_dir_all(out)?;
        let hash = cfg.hash();
        fs::write(out.join("resolved_config.json"), cfg.to_json() + "\n")?;
        let engine = ScaleEngine::build(&model, params.q, params.r)?;
        Ok(Self { cfg, out: out.to_path_buf(), hash, model, params, engine })
    }

    fn solve(&self) -> Result<HybridSolution, CliError> {
        Ok(optimizer::solve_with_engine(&self.params, &self.engine)?)
    }

    fn csv(&self, name: &str, notes: &[String], header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        write_csv(&self.out.join(name), &self.hash, notes, header, rows)
    }
}

/// Runs `cmd` with the (already overridden) configuration.
pub fn run(cmd: Command, cfg: RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let ctx = Ctx::new(cfg, out)?;
    match cmd {
        Command::Solve => solve(&ctx),
        Command::Curves => curves(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Simulate => simulate(&ctx),
        Command::Verify => verify_cmd(&ctx),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionRecord {
    pub regime: Regime,
    pub q: f64,
    pub r: f64,
    pub beta: f64,
    pub a_star: f64,
    /// `null` when there is no continuous barrier.
    pub b_star: Option<f64>,
    pub epsilon: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl From<&HybridSolution> for SolutionRecord {
    fn from(s: &HybridSolution) -> Self {
        Self {
            regime: s.regime,
            q: s.params.q,
            r: s.params.r,
            beta: s.params.beta,
            a_star: s.a_star,
            b_star: s.b_star.finite(),
            epsilon: s.epsilon,
            diagnostics: s.diagnostics,
        }
    }
}

fn solve(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sol = ctx.solve()?;
    let rec = SolutionRecord::from(&sol);
    println!("regime: {:?}", sol.regime);
    println!("a*: {}", sol.a_star);
    match sol.b_star {
        Upper::Finite(b) => println!("b*: {b}"),
        Upper::Infinite => println!("b*: inf"),
    }
    if let Some(e) = sol.epsilon {
        println!("epsilon: {e}");
    }
    let d = &sol.diagnostics;
    if sol.regime == Regime::Hybrid {
        println!("Gamma(a*, b*): {:e}", d.gamma_residual);
        if let Some(g) = d.gamma_small_residual {
            println!("gamma(a*, b*): {g:e}");
        }
        if let Some(s) = d.zero_barrier_slack {
            println!("zero-barrier slack: {s:e}");
        }
        if let Some(k) = d.epsilon_residual {
            println!("kappa(epsilon): {k:e}");
        }
    }
    write_json(&ctx.out.join("solution.json"), &rec)?;
    Ok(Outcome::Pass)
}

fn hybrid_pair(sol: &HybridSolution) -> Result<(f64, f64), CliError> {
    match (sol.regime, sol.b_star) {
        (Regime::Hybrid, Upper::Finite(b)) => Ok((sol.a_star, b)),
        _ => Err(CliError::Config(format!("curves need a hybrid solution, beta = {} gives {:?}", sol.params.beta, sol.regime))),
    }
}

/// Value of the (a, b) strategy; a = b is the classical barrier.
fn barrier_value(ctx: &Ctx, a: f64, b: f64) -> Result<Box<dyn Fn(f64) -> f64>, CliError> {
    if a < b {
        let bf = BarrierFunctions::new(ctx.params, &ctx.engine, a, b)?;
        let vf = bf.value_function();
        Ok(Box::new(move |x| vf.value(x)))
    } else {
        let vf = valuation::value_continuous_barrier(&ctx.params, &ctx.engine, b)?;
        Ok(Box::new(move |x| vf.value(x)))
    }
}

/// The suboptimal pairs compared against the optimum: a in
/// {0, a*/2, (a*+b*)/2}, b in {(a*+b*)/2, b*+1/2}, a ≤ b, duplicates removed.
pub fn suboptimal_pairs(a_star: f64, b_star: f64) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a_star + b_star);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for a in [0.0, 0.5 * a_star, mid] {
        for b in [mid, b_star + 0.5] {
            if a <= b && !out.contains(&(a, b)) {
                out.push((a, b));
            }
        }
    }
    out
}

fn curves(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sol = ctx.solve()?;
    let (a_star, b_star) = hybrid_pair(&sol)?;
    let eps = sol.epsilon.unwrap_or(0.0);
    let c = &ctx.cfg.curves;

    let mut rows = Vec::new();
    for &f in &c.b_factors {
        let b = f * b_star;
        let mut grid: Vec<f64> = (0..c.a_points).map(|i| b * i as f64 / c.a_points as f64).collect();
        let a_b = optimizer::a_of_b(eps, b);
        if !grid.contains(&a_b) && a_b < b {
            grid.push(a_b);
        }
        grid.sort_by(f64::total_cmp);
        for a in grid {
            let g = valuation::big_gamma_ab(&ctx.params, &ctx.engine, a, b)?;
            let gs = valuation::gamma_small(&ctx.params, &ctx.engine, a, b).unwrap_or(f64::NAN);
            rows.push(vec![fmt_f64(b), fmt_f64(a), fmt_f64(g), fmt_f64(gs)]);
        }
    }
    let header: Vec<String> = ["b", "a", "Gamma", "gamma_small"].iter().map(|s| s.to_string()).collect();
    let notes = vec![format!("a* = {a_star}, b* = {b_star}, epsilon = {eps}")];
    ctx.csv("gamma_scan.csv", &notes, &header, &rows)?;

    let pairs = suboptimal_pairs(a_star, b_star);
    let v_opt = barrier_value(ctx, a_star, b_star)?;
    let subs = pairs.iter().map(|&(a, b)| barrier_value(ctx, a, b)).collect::<Result<Vec<_>, _>>()?;
    let x_max = c.x_max_factor * b_star;
    let mut header = vec!["x".to_string(), "v_opt".to_string()];
    let mut notes = vec![format!("v_opt: a = {a_star}, b = {b_star}")];
    for (k, (a, b)) in pairs.iter().enumerate() {
        header.push(format!("v_sub_{}", k + 1));
        notes.push(format!("v_sub_{}: a = {a}, b = {b}", k + 1));
    }
    let mut rows = Vec::with_capacity(c.x_points);
    for i in 0..c.x_points {
        let x = x_max * i as f64 / (c.x_points - 1) as f64;
        let mut row = vec![fmt_f64(x), fmt_f64(v_opt(x))];
        row.extend(subs.iter().map(|v| fmt_f64(v(x))));
        rows.push(row);
    }
    ctx.csv("value_curves.csv", &notes, &header, &rows)?;
    println!("wrote gamma_scan.csv and value_curves.csv ({} suboptimal pairs)", pairs.len());
    Ok(Outcome::Pass)
}

fn sweep(ctx: &Ctx) -> Result<Outcome, CliError> {
    let s = &ctx.cfg.sweep;
    let (var, name) = match s.variable {
        SweepVar::Beta => (SweepVariable::Beta, "beta"),
        SweepVar::R => (SweepVariable::R, "r"),
    };
    let sols = optimizer::sweep(&ctx.params, &ctx.model, var, &s.values)?;
    let mut header: Vec<String> =
        ["variable", "value", "regime", "a_star", "b_star", "epsilon"].iter().map(|h| h.to_string()).collect();
    header.extend(s.x_ref.iter().map(|x| format!("v({x})")));
    let mut rows = Vec::new();
    for (&value, sol) in s.values.iter().zip(&sols) {
        let engine = ScaleEngine::build(&ctx.model, sol.params.q, sol.params.r)?;
        let vf = optimizer::value_function(sol, &engine)?;
        let mut row = vec![
            name.to_string(),
            fmt_f64(value),
            format!("{:?}", sol.regime),
            fmt_f64(sol.a_star),
            fmt_opt(sol.b_star.finite()),
            sol.epsilon.map_or_else(String::new, fmt_f64),
        ];
        row.extend(s.x_ref.iter().map(|&x| fmt_f64(vf.value(x))));
        rows.push(row);
    }
    ctx.csv("sweep.csv", &[], &header, &rows)?;
    println!("wrote sweep.csv ({} rows over {name})", rows.len());
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClosedForm {
    pub vp: f64,
    pub vc: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub x0: f64,
    pub a: f64,
    pub b: Option<f64>,
    pub estimate: ValueEstimate,
    pub closed_form: Option<ClosedForm>,
    pub within_ci: Option<bool>,
}

fn closed_form(ctx: &Ctx, sol: Option<&HybridSolution>, barriers: Barriers, x: f64) -> Result<Option<ClosedForm>, CliError> {
    let beta = ctx.params.beta;
    match barriers.b {
        Upper::Finite(b) if barriers.a < b => {
            let bf = BarrierFunctions::new(ctx.params, &ctx.engine, barriers.a, b)?;
            Ok(Some(ClosedForm { vp: bf.f_p(x), vc: bf.f_c(x), v: bf.value(x) }))
        }
        Upper::Finite(b) => {
            let v = valuation::value_continuous_barrier(&ctx.params, &ctx.engine, b)?.value(x);
            Ok(Some(ClosedForm { vp: 0.0, vc: v / beta, v }))
        }
        Upper::Infinite => match sol {
            Some(s) if s.regime == Regime::PurePeriodic => {
                let v = optimizer::value_function(s, &ctx.engine)?.value(x);
                Ok(Some(ClosedForm { vp: v, vc: 0.0, v }))
            }
            _ => Ok(None),
        },
    }
}

fn simulate(ctx: &Ctx) -> Result<Outcome, CliError> {
    let s = &ctx.cfg.simulate;
    let (barriers, sol) = match s.explicit_barriers() {
        Some(b) => (b, None),
        None => {
            let sol = ctx.solve()?;
            (Barriers::from_solution(&sol), Some(sol))
        }
    };
    let pool = parallel::pool()?;
    let mut records = Vec::new();
    let mut ok = true;
    let mut per_path = Vec::new();
    for &x0 in &s.x0 {
        let cfg = s.sim_config(x0, barriers);
        let est = parallel::estimate_value(&pool, &ctx.model, &ctx.params, &cfg)?;
        let cf = closed_form(ctx, sol.as_ref(), barriers, x0)?;
        let within = cf.map(|c| est.vp.covers(c.vp) && est.vc.covers(c.vc) && est.v.covers(c.v));
        ok &= within.unwrap_or(true);
        print_estimate(x0, &est, cf.as_ref());
        if s.per_path_csv {
            let sim = PathSimulator::new(&ctx.model, ctx.params, cfg)?;
            for i in 0..cfg.paths {
                let o = sim.path(&mut sim.rng(i), &mut ());
                per_path.push(vec![
                    fmt_f64(x0),
                    i.to_string(),
                    fmt_f64(o.lp),
                    fmt_f64(o.lc),
                    o.ruin_time.map_or_else(|| "censored".to_string(), fmt_f64),
                ]);
            }
        }
        records.push(SimulationRecord {
            x0,
            a: barriers.a,
            b: barriers.b.finite(),
            estimate: est,
            closed_form: cf,
            within_ci: within,
        });
    }
    write_json(&ctx.out.join("simulate.json"), &records)?;
    if s.per_path_csv {
        let header: Vec<String> =
            ["x0", "path", "lp_discounted", "lc_discounted", "ruin_time"].iter().map(|h| h.to_string()).collect();
        ctx.csv("paths.csv", &[], &header, &per_path)?;
    }
    println!("simulate: {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { Outcome::Pass } else { Outcome::Violation })
}

fn print_estimate(x0: f64, est: &ValueEstimate, cf: Option<&ClosedForm>) {
    let line = |name: &str, e: &SimEstimate, c: Option<f64>| match c {
        Some(c) => println!("x0 = {x0} {name}: {:.6} ± {:.6} (closed form {c:.6})", e.mean, e.ci_half_width_99),
        None => println!("x0 = {x0} {name}: {:.6} ± {:.6}", e.mean, e.ci_half_width_99),
    };
    line("f_p", &est.vp, cf.map(|c| c.vp));
    line("f_c", &est.vc, cf.map(|c| c.vc));
    line("v", &est.v, cf.map(|c| c.v));
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub solution: SolutionRecord,
    pub passed: bool,
    pub report: HjbReport,
}

fn verify_cmd(ctx: &Ctx) -> Result<Outcome, CliError> {
    let sol = ctx.solve()?;
    let spec = ctx.cfg.verify.grid_spec();
    let report = verify::hjb_scan(&ctx.engine, &sol, &spec)?;
    let passed = report.passed();
    for f in &report.failures {
        println!("violation: {f}");
    }
    for j in &report.derivative_jumps {
        println!("derivative order {} at {}: left {:.12e} right {:.12e}", j.order, j.at, j.left, j.right);
    }
    println!(
        "verify: {} ({} points, max violation {:e}, max equality gap {:e})",
        if passed { "PASS" } else { "FAIL" },
        report.grid.len(),
        report.max_violation,
        report.max_equality_gap
    );
    write_json(&ctx.out.join("verify.json"), &VerifyRecord { solution: SolutionRecord::from(&sol), passed, report })?;
    Ok(if passed { Outcome::Pass } else { Outcome::Violation })
}
