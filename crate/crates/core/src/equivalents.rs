//! Deterministic-equivalent solvers.
//!
//! The coupled system behind the tractable equivalent of the scatter
//! estimate is
//!
//! ```text
//! x_i = (1/N) tr (B + tau_i I) [ (1/n) sum_j v(x_j) (B + tau_j I) / (1 + c psi(x_j)) ]^{-1}
//! ```
//!
//! whose unique positive solution is the delta vector. Because the averaged
//! matrix is always a linear combination `a B + b I`, one eigendecomposition
//! of `B` reduces every sweep to scalar sums over the spectrum, and the
//! solution is affine in the scales: `delta_j = chi + tau_j gamma` with
//! `chi = (1/N) tr B T` and `gamma = (1/N) tr T`. The same two-scalar
//! kernel solves the asymptotic system over a pair of measures, which is
//! how the finite-n and limit versions stay consistent by construction.
//!
//! All fixed points use plain Picard iteration: the maps are standard
//! interference functions (positive, monotone, scalable), so the iteration
//! converges globally from any start.

use crate::linalg;
use crate::measures::{DiscreteMeasure, MeasureError};
use crate::weights::{WeightError, WeightFamily};
use crate::{C64, CMatrix};
use thiserror::Error;

/// Default componentwise relative stopping tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default sweep cap for the Picard iterations.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Tolerance on the unit integral of the profile function in the scalar
/// equation solvers.
pub const UNIT_INTEGRAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivalentsError {
    #[error("no convergence after {iterations} sweeps; residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("scale tau[{index}] = {value} must be a finite non-negative real")]
    BadScale { index: usize, value: f64 },
    #[error("start[{index}] = {value} must be a finite non-negative real")]
    BadStart { index: usize, value: f64 },
    #[error("averaged matrix is singular: B has a null direction and all scales vanish")]
    SingularAverage,
    #[error("profile function must be positive and finite, got f({atom}) = {value}")]
    BadProfile { atom: f64, value: f64 },
    #[error("profile function integrates to {0}, expected 1")]
    ProfileNotNormalized(f64),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
    #[error("spectral mean of the eigenvalue measure must be positive")]
    ZeroSpectrum,
    #[error("bisection bracket failed: h({hi}) = {value} < 1")]
    EtaBracket { hi: f64, value: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Converged deterministic equivalent for one instance.
#[derive(Debug, Clone)]
pub struct EquivalentResult {
    /// Per-sample solution of the coupled system.
    pub delta: Vec<f64>,
    /// `(1/N) tr B T`.
    pub chi_hat: f64,
    /// `(1/N) tr T`.
    pub gamma_hat: f64,
    /// Resolvent `T = [(1/n) sum_j v(delta_j)(B + tau_j I)/(1 + c psi(delta_j))]^{-1}`.
    pub t_matrix: CMatrix,
    /// Picard sweeps performed.
    pub iterations: usize,
    /// Largest relative per-coordinate defect of the system at the
    /// returned solution.
    pub residual: f64,
}

fn validate_scales(tau: &[f64]) -> Result<(), EquivalentsError> {
    for (index, &value) in tau.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(EquivalentsError::BadScale { index, value });
        }
    }
    Ok(())
}

/// Weighted coefficients `a = int v/(1+c psi) d mu`, `b = int t v/(1+c psi) d mu`.
fn averaged_coefficients(
    w: &WeightFamily,
    atoms: &[f64],
    weights: &[f64],
    x: impl Fn(usize) -> f64,
) -> Result<(f64, f64), EquivalentsError> {
    let c = w.c();
    let mut a = 0.0;
    let mut b = 0.0;
    for (k, (&t, &wk)) in atoms.iter().zip(weights).enumerate() {
        let (v, psi) = w.v_psi(x(k))?;
        let factor = wk * v / (1.0 + c * psi);
        a += factor;
        b += factor * t;
    }
    Ok((a, b))
}

/// `chi = int y/(a y + b) dF`, `gamma = int 1/(a y + b) dF` over the
/// eigenvalue distribution.
fn chi_gamma_traces(
    eig_atoms: &[f64],
    eig_weights: &[f64],
    a: f64,
    b: f64,
) -> Result<(f64, f64), EquivalentsError> {
    let mut chi = 0.0;
    let mut gamma = 0.0;
    for (&y, &wk) in eig_atoms.iter().zip(eig_weights) {
        let den = a * y + b;
        if den <= 0.0 {
            return Err(EquivalentsError::SingularAverage);
        }
        chi += wk * y / den;
        gamma += wk / den;
    }
    Ok((chi, gamma))
}

struct ChiGammaSolve {
    chi: f64,
    gamma: f64,
    iterations: usize,
}

/// Picard iteration on the two-scalar system over an eigenvalue measure
/// (`eig_atoms`, `eig_weights`) and a scale measure (`tau_atoms`,
/// `tau_weights`), from the point `(chi0, gamma0)`.
#[allow(clippy::too_many_arguments)]
fn chi_gamma_fixed_point(
    w: &WeightFamily,
    eig_atoms: &[f64],
    eig_weights: &[f64],
    tau_atoms: &[f64],
    tau_weights: &[f64],
    start: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<ChiGammaSolve, EquivalentsError> {
    let (mut chi, mut gamma) = start;
    let mut iterations = 0;
    loop {
        let (a, b) =
            averaged_coefficients(w, tau_atoms, tau_weights, |k| chi + tau_atoms[k] * gamma)?;
        let (chi_next, gamma_next) = chi_gamma_traces(eig_atoms, eig_weights, a, b)?;
        iterations += 1;
        let change = ((chi_next - chi).abs() / (chi_next.abs() + 1e-300))
            .max((gamma_next - gamma).abs() / (gamma_next.abs() + 1e-300));
        chi = chi_next;
        gamma = gamma_next;
        if change <= tol {
            return Ok(ChiGammaSolve {
                chi,
                gamma,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(EquivalentsError::NoConvergence {
                iterations,
                residual: change,
            });
        }
    }
}

/// Solves the coupled per-sample system for `delta`, starting from the
/// all-ones vector.
pub fn solve_delta_system(
    b_matrix: &CMatrix,
    tau: &[f64],
    w: &WeightFamily,
    tol: f64,
    max_iter: usize,
) -> Result<EquivalentResult, EquivalentsError> {
    solve_delta_system_from(b_matrix, tau, w, &vec![1.0; tau.len()], tol, max_iter)
}

/// Solves the coupled per-sample system for `delta` from a caller-supplied
/// non-negative start.
pub fn solve_delta_system_from(
    b_matrix: &CMatrix,
    tau: &[f64],
    w: &WeightFamily,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EquivalentResult, EquivalentsError> {
    validate_scales(tau)?;
    for (index, &value) in start.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(EquivalentsError::BadStart { index, value });
        }
    }
    let n = tau.len();
    let (eigs, vectors) = linalg::eigh(b_matrix);
    let n_dim = eigs.len();
    let eig_weights = vec![1.0 / n_dim as f64; n_dim];

    // The first sweep consumes the raw start; afterwards every iterate is
    // affine in tau, so the iteration continues on the grouped two-scalar
    // form (identical atoms share one coordinate).
    let sample_weights = vec![1.0 / n as f64; n];
    let (a0, b0) = averaged_coefficients(w, tau, &sample_weights, |k| start[k])?;
    let start_pair = chi_gamma_traces(&eigs, &eig_weights, a0, b0)?;

    let grouped = crate::measures::empirical_measure(tau)?;
    let solve = chi_gamma_fixed_point(
        w,
        &eigs,
        &eig_weights,
        grouped.atoms(),
        grouped.weights(),
        start_pair,
        tol,
        max_iter.saturating_sub(1).max(1),
    )?;
    let iterations = solve.iterations + 1;

    let delta: Vec<f64> = tau.iter().map(|&t| solve.chi + t * solve.gamma).collect();

    // Residual: one more application of the map, componentwise.
    let (a, b) = averaged_coefficients(w, tau, &sample_weights, |k| delta[k])?;
    let (chi_check, gamma_check) = chi_gamma_traces(&eigs, &eig_weights, a, b)?;
    let mut residual = 0.0_f64;
    for (&t, &d) in tau.iter().zip(&delta) {
        let h = chi_check + t * gamma_check;
        residual = residual.max((h - d).abs() / (d.abs() + 1e-300));
    }

    // T = U diag(1/(a l_k + b)) U*.
    let inv_diag = crate::CVector::from_iterator(
        n_dim,
        eigs.iter().map(|&l| C64::new(1.0 / (a * l + b), 0.0)),
    );
    let mut t_matrix = &vectors * CMatrix::from_diagonal(&inv_diag) * vectors.adjoint();
    linalg::hermitize(&mut t_matrix);

    Ok(EquivalentResult {
        delta,
        chi_hat: solve.chi,
        gamma_hat: solve.gamma,
        t_matrix,
        iterations,
        residual,
    })
}

/// Two-scalar reduction over the empirical scale measure: returns
/// `(chi_hat, gamma_hat)` such that `delta_j = chi_hat + tau_j gamma_hat`
/// solves the full system.
pub fn solve_chi_gamma_hat(
    b_matrix: &CMatrix,
    tau_measure: &DiscreteMeasure,
    w: &WeightFamily,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), EquivalentsError> {
    let eigs = linalg::eigh_values(b_matrix);
    let eig_weights = vec![1.0 / eigs.len() as f64; eigs.len()];
    let solve = chi_gamma_fixed_point(
        w,
        &eigs,
        &eig_weights,
        tau_measure.atoms(),
        tau_measure.weights(),
        (1.0, 1.0),
        tol,
        max_iter,
    )?;
    Ok((solve.chi, solve.gamma))
}

/// Asymptotic two-scalar system over a limiting eigenvalue distribution
/// `fb` and scale distribution `nu`.
pub fn solve_chi_gamma_infinity(
    fb: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    w: &WeightFamily,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), EquivalentsError> {
    let solve = chi_gamma_fixed_point(
        w,
        fb.atoms(),
        fb.weights(),
        nu.atoms(),
        nu.weights(),
        (1.0, 1.0),
        tol,
        max_iter,
    )?;
    Ok((solve.chi, solve.gamma))
}

/// One application of the coupled map to an arbitrary non-negative vector.
/// Exposes the interference-function structure (positivity, monotonicity,
/// scalability) for property probes.
pub fn delta_map(
    b_matrix: &CMatrix,
    tau: &[f64],
    w: &WeightFamily,
    x: &[f64],
) -> Result<Vec<f64>, EquivalentsError> {
    validate_scales(tau)?;
    let n = tau.len();
    let eigs = linalg::eigh_values(b_matrix);
    let eig_weights = vec![1.0 / eigs.len() as f64; eigs.len()];
    let sample_weights = vec![1.0 / n as f64; n];
    let (a, b) = averaged_coefficients(w, tau, &sample_weights, |k| x[k])?;
    let (chi, gamma) = chi_gamma_traces(&eigs, &eig_weights, a, b)?;
    Ok(tau.iter().map(|&t| chi + t * gamma).collect())
}

fn validate_profile(
    atoms: &[f64],
    f: &impl Fn(f64) -> f64,
) -> Result<Vec<f64>, EquivalentsError> {
    atoms
        .iter()
        .map(|&t| {
            let v = f(t);
            if !v.is_finite() || v <= 0.0 {
                Err(EquivalentsError::BadProfile { atom: t, value: v })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Solves the scalar normalization equation
/// `int dF(y) / int ((y + t)/(t + x)) f(t) dnu(t) = 1`
/// by bisection on `(0, max_atom(F)]`. The profile `f` must be positive
/// with unit integral against `nu`.
pub fn solve_eta(
    fb: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<f64, EquivalentsError> {
    let f_vals = validate_profile(nu.atoms(), &f)?;
    let integral: f64 = nu
        .weights()
        .iter()
        .zip(&f_vals)
        .map(|(w, v)| w * v)
        .sum();
    if (integral - 1.0).abs() > UNIT_INTEGRAL_TOL {
        return Err(EquivalentsError::ProfileNotNormalized(integral));
    }
    let mean = fb.mean();
    if mean <= 0.0 {
        return Err(EquivalentsError::ZeroSpectrum);
    }

    let h = |x: f64| -> f64 {
        fb.atoms()
            .iter()
            .zip(fb.weights())
            .map(|(&y, &wy)| {
                let den: f64 = nu
                    .atoms()
                    .iter()
                    .zip(nu.weights())
                    .zip(&f_vals)
                    .map(|((&t, &wt), &ft)| wt * ft * (y + t) / (t + x))
                    .sum();
                wy / den
            })
            .sum()
    };

    let mut lo = 1e-14 * mean;
    let mut hi = fb.max_atom();
    let h_hi = h(hi);
    if h_hi < 1.0 - 1e-9 {
        return Err(EquivalentsError::EtaBracket { hi, value: h_hi });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let hm = h(mid);
        if (hm - 1.0).abs() <= tol {
            return Ok(mid);
        }
        if hm < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Solves the system of normalized traces
/// `e_k = (f(tau_k)/n) tr [(B + tau_k I)/(tau_k + eta)] M^{-1}` with
/// `M = (1/n) sum_i f(tau_i)(B + tau_i I)/((tau_i + eta)(1 + e_i))`,
/// by Picard iteration from zero.
pub fn solve_e_system(
    b_matrix: &CMatrix,
    tau: &[f64],
    f: impl Fn(f64) -> f64,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, EquivalentsError> {
    validate_scales(tau)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(EquivalentsError::BadEta(eta));
    }
    let f_vals = validate_profile(tau, &f)?;
    let n = tau.len();
    let eigs = linalg::eigh_values(b_matrix);
    let n_dim = eigs.len();

    let mut e = vec![0.0_f64; n];
    let mut iterations = 0;
    loop {
        // M = a B + b I over the current e.
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..n {
            let factor = f_vals[i] / ((tau[i] + eta) * (1.0 + e[i])) / n as f64;
            a += factor;
            b += factor * tau[i];
        }
        // tr(B M^{-1}) and tr(M^{-1}) over the spectrum.
        let mut tr_b = 0.0;
        let mut tr_i = 0.0;
        for &l in &eigs {
            let den = a * l + b;
            if den <= 0.0 {
                return Err(EquivalentsError::SingularAverage);
            }
            tr_b += l / den;
            tr_i += 1.0 / den;
        }
        let _ = n_dim;
        let mut change = 0.0_f64;
        for k in 0..n {
            let next = f_vals[k] / (n as f64 * (tau[k] + eta)) * (tr_b + tau[k] * tr_i);
            change = change.max((next - e[k]).abs() / (next.abs() + 1e-300));
            e[k] = next;
        }
        iterations += 1;
        if change <= tol {
            return Ok(e);
        }
        if iterations >= max_iter {
            return Err(EquivalentsError::NoConvergence {
                iterations,
                residual: change,
            });
        }
    }
}
