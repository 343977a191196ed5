//! Command-line front end: JSON configs, CSV/JSON outputs and
//! block-parallel simulation on top of `dualdiv-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;

pub use dualdiv_core as core;
