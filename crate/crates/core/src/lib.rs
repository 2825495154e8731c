//! Block-structured gradient descent with Armijo backtracking.
//!
//! Three methods share one iteration loop:
//!
//! * standard gradient descent with a fixed rate,
//! * backtracking gradient descent, taking the largest step on the grid
//!   `{beta^n * delta0}` that satisfies Armijo's sufficient-decrease test,
//! * coordinate-wise backtracking, which starts every coordinate block at the
//!   backtracking rate and then raises each block's rate in turn, as far as
//!   the coordinate-wise Armijo test allows.
//!
//! The [`diagnostics`] module audits finished trajectories, and [`expr`]
//! turns expression strings into objectives.

pub mod diagnostics;
mod error;
pub mod expr;
pub mod linesearch;
pub mod objectives;
pub mod optimizers;
pub mod types;

pub use error::{Error, Result};
pub use objectives::Objective;
pub use optimizers::{run, Method, OrderPolicy, RunConfig, Status, Trajectory};
pub use types::{
    BlockGradient, BlockPartition, BlockVector, ExclusionRegion, HyperParams, LearningRates,
};
