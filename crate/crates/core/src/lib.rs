//! Hybrid periodic/continuous dividend barriers for spectrally positive
//! Lévy processes with phase-type jumps.
//!
//! The crate is `no_std` with `alloc`; the `std` feature only switches the
//! dependencies to their std builds.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cases;
pub mod error;
pub mod expsum;
pub mod levy;
pub mod optimizer;
pub mod quad;
pub mod roots;
pub mod scale;
pub mod sim;
pub mod valuation;
pub mod verify;

pub use error::{Error, Result};
pub use expsum::{ExpSum, Piecewise, Side};
pub use levy::{LevyModel, PhaseType, VariationClass};
pub use optimizer::{solve, HybridSolution};
pub use scale::{CompositeKind, ScaleEngine, ScaleFamily};
pub use valuation::{ProblemParams, Regime, Upper, ValueFunction};
