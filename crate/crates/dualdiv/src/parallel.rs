//! Block-parallel Monte Carlo. Blocks are computed on a rayon pool and
//! merged in block order, so results do not depend on the thread count.

use dualdiv_core::sim::{PathSimulator, SimConfig, ValueAccumulator, ValueEstimate};
use dualdiv_core::{LevyModel, ProblemParams};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::CliError;

/// Thread count from `DUALDIV_THREADS`, else rayon's default.
pub fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("DUALDIV_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("DUALDIV_THREADS must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn pool() -> Result<ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Numeric(e.to_string()))
}

pub fn estimate_value(
    pool: &ThreadPool,
    model: &LevyModel,
    params: &ProblemParams,
    config: &SimConfig,
) -> Result<ValueEstimate, CliError> {
    let sim = PathSimulator::new(model, *params, *config)?;
    let blocks: Vec<ValueAccumulator> = pool.install(|| (0..config.blocks()).into_par_iter().map(|k| sim.block(k)).collect());
    let mut acc = ValueAccumulator::default();
    for b in &blocks {
        acc.merge(b);
    }
    Ok(sim.finish(&acc))
}
