//! Reference models used by the CLI defaults and the test suites.
//!
//! The jump law is a six-phase Erlang mixture with common rate fitted to
//! the folded standard normal (mean matched exactly, L2 density error about
//! 8e-6).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::levy::{LevyModel, PhaseType};
use crate::valuation::ProblemParams;

pub const ERLANG_RATE: f64 = 4.261_670_198_182_894;

/// Initial law over the six phases (phase i needs 6 - i more stages).
pub const ERLANG_ALPHA: [f64; 6] = [
    0.256_789_239_697_033_27,
    0.0,
    0.189_436_259_769_346_97,
    0.182_449_077_931_285_31,
    0.183_167_720_708_040_77,
    0.188_157_701_894_293_76,
];

pub fn folded_normal_alpha() -> Vec<f64> {
    ERLANG_ALPHA.to_vec()
}

pub fn folded_normal_t() -> Vec<Vec<f64>> {
    let m = ERLANG_ALPHA.len();
    (0..m)
        .map(|i| {
            let mut row = vec![0.0; m];
            row[i] = -ERLANG_RATE;
            if i + 1 < m {
                row[i + 1] = ERLANG_RATE;
            }
            row
        })
        .collect()
}

pub fn folded_normal_ph() -> PhaseType {
    PhaseType::new(folded_normal_alpha(), folded_normal_t()).expect("reference phase-type is valid")
}

/// c = 1, σ = 0.2, κ = 2: interior optimum a* > 0 at β = 0.6.
pub fn case1_model() -> LevyModel {
    LevyModel::new(1.0, 0.2, 2.0, Some(folded_normal_ph())).expect("case 1 is admissible")
}

/// c = 1.5, otherwise as case 1: optimum with a* = 0.
pub fn case2_model() -> LevyModel {
    LevyModel::new(1.5, 0.2, 2.0, Some(folded_normal_ph())).expect("case 2 is admissible")
}

/// q = r = 0.05 with the given β.
pub fn params(beta: f64) -> Result<ProblemParams> {
    ProblemParams::new(0.05, 0.05, beta)
}
