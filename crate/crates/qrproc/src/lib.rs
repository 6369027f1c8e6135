//! Fast estimation and inference for the linear quantile regression
//! coefficient process.
//!
//! Quantile regression estimates the conditional quantiles of a response as
//! linear functions of covariates.  Estimating the whole coefficient process
//! `β(τ)` on a fine grid of quantile indices — and bootstrapping it for
//! inference — is expensive when done naively, because every grid point and
//! every bootstrap replicate is a separate optimization problem.  This crate
//! implements three estimation engines with very different cost profiles and
//! identical (or asymptotically equivalent) output:
//!
//! * **baseline** — a primal-dual interior point solver with Mehrotra
//!   predictor-corrector steps, applied to the full data at each quantile
//!   index.  Exact and robust; the reference everything else is measured
//!   against.
//! * **preprocess** — solves each quantile regression on a small subset of
//!   observations chosen from a preliminary estimate, collapsing the rows
//!   predicted to fall above/below the fitted hyperplane into two aggregate
//!   pseudo-observations.  A sign-check and fixup loop makes the result
//!   *exactly* equal to the baseline solution while touching only
//!   `O(√(kn))` rows per grid point after the first.
//! * **onestep** — updates the previous grid point's coefficients with a
//!   single Newton step on the quantile moment condition, using a kernel
//!   estimate of the Jacobian.  Asymptotically equivalent to the exact
//!   solution at a fraction of the cost.
//!
//! On top of the estimation engines sit resampling and inference tools:
//! weighted/empirical bootstrap of the whole process (with preprocessing
//! inside every replicate), a score multiplier bootstrap that never re-solves
//! anything, analytic sandwich standard errors, pointwise and uniform
//! (Kolmogorov–Smirnov / Cramér–von Mises type) tests, and uniform
//! confidence bands.  A simulation module ships data generating processes
//! with analytic coefficient functions plus Monte Carlo harnesses for
//! accuracy, test size/power, and engine timing studies.
//!
//! All randomized components draw from counter-based per-replicate RNG
//! streams, so results are bit-identical for a given seed regardless of
//! thread count or execution order.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod grid;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod onestep;
pub mod preprocess;
pub mod rng;
pub mod simulate;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{load_csv, Dataset};
pub use error::Error;
pub use grid::QuantileGrid;
pub use model::{
    check_loss, interpolate_process, moment, objective, CoefProcess, Engine, QrFit,
};
pub use solver::{solve_qr, solve_qr_bruteforce, SolverOptions};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
