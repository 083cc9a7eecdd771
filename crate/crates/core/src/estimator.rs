//! The robust scatter fixed point and its empirical equivalents.
//!
//! [`solve_maronna`] iterates
//! `Z <- (1/n) sum_i u((1/N) y_i* Z^{-1} y_i) y_i y_i*`
//! from the identity (any Hermitian positive-definite start is accepted;
//! the fixed point is unique, so the start only affects the path). Each
//! sweep costs one Hermitian factorization plus one triangular solve
//! against all columns; leave-one-out matrices are never formed — the
//! per-sample quadratic forms come from the rank-one identity
//! `q_i = g((1/N) y_i* C^{-1} y_i)`.

use crate::datagen::ObservationSet;
use crate::linalg;
use crate::weights::{WeightError, WeightFamily};
use crate::{C64, CMatrix};
use nalgebra::Cholesky;
use nalgebra::Dyn;
use thiserror::Error;

/// Default relative tolerance on both the iterate change and the
/// fixed-point defect, in spectral norm.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default sweep cap.
pub const DEFAULT_MAX_ITER: usize = 500;
/// Condition-number guard on the iterate.
pub const CONDITION_LIMIT: f64 = 1e14;
/// Hermitian defect tolerance for [`spectral_norm`], relative to the
/// largest entry.
pub const SPECTRAL_HERMITIAN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("no convergence after {iterations} sweeps; last residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate became numerically singular (condition estimate {0:.3e})")]
    SingularIterate(f64),
    #[error("initial iterate must be Hermitian positive definite")]
    BadStart,
    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("weight lengths: expected {expected}, got {got}")]
    WeightLength { expected: usize, got: usize },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Converged scatter estimate with per-sample diagnostics.
#[derive(Debug, Clone)]
pub struct ScatterResult {
    /// The scatter estimate, Hermitian positive definite.
    pub c_hat: CMatrix,
    /// Leave-one-out quadratic forms `q_i = (1/N) y_i* C_(i)^{-1} y_i`.
    pub q: Vec<f64>,
    /// Sweeps performed, including the final verification sweep.
    pub iterations: usize,
    /// Fixed-point defect `|C - RHS(C)| / |C|` in spectral norm.
    pub residual: f64,
    /// Relative Frobenius change per sweep, for diagnostics export.
    pub residual_trace: Vec<f64>,
}

impl ScatterResult {
    /// Diagnostic rows `(iter, residual)` as CSV lines.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,residual\n");
        for (i, r) in self.residual_trace.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, r));
        }
        out
    }
}

struct Sweep {
    z_next: CMatrix,
    quad_forms: Vec<f64>,
}

/// One application of the fixed-point map to `z`, reusing a factorization.
fn sweep(obs: &ObservationSet, w: &WeightFamily, z: &CMatrix) -> Result<Sweep, EstimatorError> {
    let n_dim = obs.n_dim();
    let n = obs.n_samples();
    let chol: Cholesky<C64, Dyn> =
        Cholesky::new(z.clone()).ok_or(EstimatorError::SingularIterate(f64::INFINITY))?;
    // Condition estimate from the factor diagonal; exact enough for the
    // 1e14 guard.
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
    for i in 0..n_dim {
        let d = chol.l_dirty()[(i, i)].re;
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let cond = (dmax / dmin).powi(2);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(EstimatorError::SingularIterate(cond));
    }
    // r_i = (1/N) y_i* Z^{-1} y_i = (1/N) |L^{-1} y_i|^2.
    let x = chol
        .l_dirty()
        .solve_lower_triangular(obs.y())
        .ok_or(EstimatorError::SingularIterate(cond))?;
    let mut quad_forms = Vec::with_capacity(n);
    let mut scaled = obs.y().clone();
    for i in 0..n {
        let r = x.column(i).norm_squared() / n_dim as f64;
        let u = w.eval_u(r)?;
        quad_forms.push(r);
        scaled.column_mut(i).scale_mut((u / n as f64).sqrt());
    }
    let mut z_next = &scaled * scaled.adjoint();
    linalg::hermitize(&mut z_next);
    Ok(Sweep { z_next, quad_forms })
}

/// Solves the scatter fixed point from the identity start.
pub fn solve_maronna(
    obs: &ObservationSet,
    w: &WeightFamily,
    tol: f64,
    max_iter: usize,
) -> Result<ScatterResult, EstimatorError> {
    solve_maronna_from(
        obs,
        w,
        CMatrix::identity(obs.n_dim(), obs.n_dim()),
        tol,
        max_iter,
    )
}

/// Solves the scatter fixed point from a caller-supplied Hermitian
/// positive-definite start.
pub fn solve_maronna_from(
    obs: &ObservationSet,
    w: &WeightFamily,
    z0: CMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<ScatterResult, EstimatorError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(EstimatorError::BadTolerance(tol));
    }
    let n_dim = obs.n_dim();
    if z0.nrows() != n_dim || z0.ncols() != n_dim {
        return Err(EstimatorError::BadStart);
    }
    if linalg::hermitian_defect(&z0) > 1e-10 * linalg::max_entry(&z0).max(1.0) {
        return Err(EstimatorError::BadStart);
    }
    let sqrt_dim = (n_dim as f64).sqrt();

    let mut z = z0;
    let mut iterations = 0usize;
    let mut residual_trace = Vec::new();
    let mut last_rel_change = f64::INFINITY;
    while iterations < max_iter {
        let step = sweep(obs, w, &z)?;
        iterations += 1;
        let diff = &step.z_next - &z;
        let diff_fro = linalg::frobenius_norm(&diff);
        let z_fro = linalg::frobenius_norm(&step.z_next);
        last_rel_change = diff_fro / z_fro;
        residual_trace.push(last_rel_change);
        z = step.z_next;

        // |D|_2 <= |D|_F and |Z|_F <= sqrt(N) |Z|_2, so this implies the
        // relative spectral-norm change is below tol.
        if diff_fro * sqrt_dim <= tol * z_fro {
            // Verify the fixed-point defect exactly before declaring
            // convergence; the iterate-change criterion alone can stall
            // above the true defect.
            let verify = sweep(obs, w, &z)?;
            iterations += 1;
            let defect = &verify.z_next - &z;
            let residual =
                linalg::hermitian_spectral_norm(&defect) / linalg::hermitian_spectral_norm(&z);
            if residual <= tol {
                let q = quad_to_q(w, &verify.quad_forms)?;
                return Ok(ScatterResult {
                    c_hat: z,
                    q,
                    iterations,
                    residual,
                    residual_trace,
                });
            }
            residual_trace.push(residual);
            z = verify.z_next;
        }
    }
    Err(EstimatorError::NoConvergence {
        iterations,
        residual: last_rel_change,
    })
}

fn quad_to_q(w: &WeightFamily, quad_forms: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    quad_forms
        .iter()
        .map(|&r| w.eval_g(r).map_err(EstimatorError::from))
        .collect()
}

/// Per-sample leave-one-out quadratic forms from a converged estimate:
/// `q_i = g((1/N) y_i* C^{-1} y_i)`, the rank-one identity that avoids
/// forming any leave-one-out matrix.
pub fn extract_q(
    obs: &ObservationSet,
    c_hat: &CMatrix,
    w: &WeightFamily,
) -> Result<Vec<f64>, EstimatorError> {
    let step = sweep(obs, w, c_hat)?;
    quad_to_q(w, &step.quad_forms)
}

fn weighted_gram(obs: &ObservationSet, weights: &[f64]) -> Result<CMatrix, EstimatorError> {
    let n = obs.n_samples();
    if weights.len() != n {
        return Err(EstimatorError::WeightLength {
            expected: n,
            got: weights.len(),
        });
    }
    let mut scaled = obs.y().clone();
    for (i, &weight) in weights.iter().enumerate() {
        scaled.column_mut(i).scale_mut((weight / n as f64).sqrt());
    }
    let mut out = &scaled * scaled.adjoint();
    linalg::hermitize(&mut out);
    Ok(out)
}

/// The weighted empirical matrix `(1/n) sum_i v(delta_i) y_i y_i*`.
pub fn assemble_s_hat(
    obs: &ObservationSet,
    w: &WeightFamily,
    delta: &[f64],
) -> Result<CMatrix, EstimatorError> {
    let v: Result<Vec<f64>, WeightError> = delta.iter().map(|&d| w.eval_v(d)).collect();
    weighted_gram(obs, &v?)
}

/// The weighted empirical matrix with affine scale weights
/// `v(chi + tau_i gamma)`.
pub fn assemble_s_corollary(
    obs: &ObservationSet,
    w: &WeightFamily,
    chi: f64,
    gamma: f64,
) -> Result<CMatrix, EstimatorError> {
    let v: Result<Vec<f64>, WeightError> = obs
        .tau()
        .iter()
        .map(|&t| w.eval_v(chi + t * gamma))
        .collect();
    weighted_gram(obs, &v?)
}

/// Spectral norm of a Hermitian matrix: the largest eigenvalue modulus.
pub fn spectral_norm(m: &CMatrix) -> Result<f64, EstimatorError> {
    let scale = linalg::max_entry(m).max(1.0);
    let defect = linalg::hermitian_defect(m);
    let tol = SPECTRAL_HERMITIAN_TOL * scale;
    if defect > tol {
        return Err(EstimatorError::NotHermitian { defect, tol });
    }
    Ok(linalg::hermitian_spectral_norm(m))
}
