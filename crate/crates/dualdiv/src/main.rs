use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualdiv::commands::{self, Command};
use dualdiv::config::RunConfig;
use dualdiv::error::CliError;

#[derive(Parser)]
#[command(name = "dualdiv", version, about = "Hybrid periodic/continuous dividend barriers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve for the optimal barriers.
    Solve(Common),
    /// Write Γ scans and value curves.
    Curves(Common),
    /// Solve over a range of β or r.
    Sweep(Common),
    /// Monte Carlo check against the closed forms.
    Simulate(Common),
    /// Check the HJB conditions on a grid.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override simulate.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override simulate.paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Override simulate.dt.
    #[arg(long)]
    dt: Option<f64>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (cmd, args) = match cli.command {
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Curves(a) => (Command::Curves, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Verify(a) => (Command::Verify, a),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.simulate.seed = s;
    }
    if let Some(p) = args.paths {
        cfg.simulate.paths = p;
    }
    if let Some(dt) = args.dt {
        cfg.simulate.dt = dt;
    }
    let out = args.out.or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    Ok(commands::run(cmd, cfg, &out)?.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
