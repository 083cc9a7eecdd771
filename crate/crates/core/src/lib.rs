//! Robust scatter estimation for observations made of a rank-K signal plus
//! elliptical heavy-tailed noise, together with the random-matrix
//! deterministic equivalents that describe the estimator at scale.
//!
//! The library is organized around the estimation pipeline:
//!
//! - [`weights`]: the weight function `u` and its derived functions
//!   (`phi`, `g`, `g^{-1}`, `v`, `psi`) with validated regularity.
//! - [`measures`]: finite discrete probability measures for the noise-scale
//!   distribution and for eigenvalue distributions.
//! - [`datagen`]: reproducible generation of observation sets
//!   `y_i = A s_i + sqrt(tau_i) w_i`.
//! - [`estimator`]: the fixed-point scatter solve, per-sample quadratic
//!   forms, and assembly of the weighted empirical equivalents.
//! - [`equivalents`]: deterministic-equivalent solvers (the coupled delta
//!   system, its two-scalar reduction, the eta scalar equation, and the
//!   e-system of normalized traces).
//! - [`rmt_checks`]: statistical verifiers quantifying finite-size agreement
//!   with the asymptotic claims.
//! - [`harness`]: the Monte Carlo experiment engine and its CSV outputs.
//!
//! All randomness is seeded explicitly; identical seeds reproduce identical
//! outputs bit for bit on a fixed floating-point environment.

pub mod datagen;
pub mod equivalents;
pub mod estimator;
pub mod harness;
mod linalg;
pub mod measures;
pub mod rmt_checks;
pub mod seed;
pub mod weights;

pub use nalgebra;

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix used for observations and scatter matrices.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
