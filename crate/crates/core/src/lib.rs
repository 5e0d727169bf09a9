//! Simulation and Monte Carlo verification laboratory for function-valued
//! random-coefficient AR(1) processes.
//!
//! The crate simulates processes of the form
//! `X_i - mu = rho_i (X_{i-1} - mu) + eps_i` on discretized function spaces,
//! computes their martingale-plus-coboundary decomposition and covariance
//! structure, and verifies the classical limit laws (laws of large numbers,
//! convergence rates, complete convergence, exponential moments, the central
//! limit theorem) with seeded, reproducible Monte Carlo harnesses backed by
//! closed-form oracles wherever one exists.
//!
//! Module map:
//!
//! * [`funspace`] — grids, grid functions, kernel operators, norms.
//! * [`coeffgen`] — operator and noise samplers plus condition diagnostics.
//! * [`process`] — the model and both trajectory engines.
//! * [`martingale`] — resolvent, decomposition, telescoping identities.
//! * [`estimate`] — covariance operators, nuclear norms, long-run sums.
//! * [`verify`] — the limit-law harnesses and their reports.

pub mod coeffgen;
pub mod error;
pub mod estimate;
pub mod funspace;
pub mod martingale;
pub mod process;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
