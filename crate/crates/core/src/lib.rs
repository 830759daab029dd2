//! Primal-dual extragradient solvers for separable minimax, finite-sum and
//! minimax finite-sum problems, with quadratic test instances and
//! verification tooling.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod engine;
pub mod error;
pub mod finitesum;
pub mod invariants;
pub mod linalg;
pub mod math;
pub mod minimax;
pub mod mmfs;
pub mod oracle;
pub mod problem;
pub mod qmm;
pub mod quadratic;
pub mod reductions;
pub mod saddle;
pub mod sweep;
pub mod testbed;
pub mod trace;

pub use error::{Diagnostics, PdxError, Result};
