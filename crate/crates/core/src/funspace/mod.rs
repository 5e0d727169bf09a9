//! Discretized function-space arithmetic.
//!
//! Functions on `[0,1]` are represented by their values on a quadrature grid,
//! and bounded linear operators by kernel matrices applied through the
//! quadrature weights. With an `m = 1` grid every type collapses to a scalar
//! and all operations reproduce plain real arithmetic, which is the oracle
//! backbone used by the verification harnesses.

mod grid;
mod operator;

pub use grid::{Grid, GridFunction, NormKind, SharedGrid};
pub use operator::LinearOp;
