//! Statistical verifiers for the random-matrix machinery.
//!
//! Each check converts an almost-sure asymptotic statement into a finite-size
//! test in one of two honest forms: an absolute threshold calibrated once and
//! committed (see [`calibration`]), or a paired monotone trend across sizes.
//! A finite run cannot witness a limit; calibrated bands and trends are the
//! testable proxies. Reports are reproducible by seed and serialize to CSV.

use crate::datagen::{standard_complex, unit_sphere_scaled};
use crate::linalg;
use crate::seed::rng_for;
use crate::{C64, CMatrix, CVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

/// Frozen thresholds with their provenance. Every non-analytic constant was
/// measured once with the probe runs recorded next to it and then
/// committed; nothing here is tuned at run time.
pub mod calibration {
    /// Trace-concentration threshold is `TRACE_LEMMA_COEFF * kappa / sqrt(N)`.
    /// Calibration run: composite vectors, uniform diagonal matrices,
    /// N = 100, n = 300, kappa = 1, seeds 0..200: p50 = 0.215,
    /// p99 = 0.299, max = 0.313. Coefficient 3.5 gives threshold 0.35 and
    /// a 200/200 pass rate on that batch.
    pub const TRACE_LEMMA_COEFF: f64 = 3.5;

    /// As above for the worst-case identity matrix against plain Gaussian
    /// vectors (every diagonal entry at the kappa extreme). Same run:
    /// p50 = 0.315, p95 = 0.408, max = 0.536; pass rate at 0.35 is only
    /// 150/200, so this family needs the wider band.
    pub const TRACE_LEMMA_IDENTITY_COEFF: f64 = 4.5;

    /// Floor on the smallest leave-one-out eigenvalue. Calibration run:
    /// N = 50, n = 150, seeds 0..200: min statistic observed 0.150
    /// against the heuristic bulk edge (1 - sqrt(1/3))^2 = 0.179.
    pub const SMALLEST_EIG_FLOOR: f64 = 0.05;

    /// Cap on the median fixed-norm vs raw-Gaussian gap at the larger of
    /// the two compared sizes (4N = 200). Calibration run: N = 50 -> 200,
    /// 3 trials per size, seeds 0..60: max large-size median observed
    /// 0.123; the median decreased with size in 60/60 seeds.
    pub const GAUSSIAN_EQUIV_LIMIT: f64 = 0.2;

    /// Squared prefactor of the exponential tail bound (the bound carries
    /// e^{1/2}); analytic, not calibrated.
    pub const CONCENTRATION_PREFACTOR_SQ: f64 = std::f64::consts::E;
}

/// Outcome of one statistical check. `passed` holds exactly when
/// `statistic <= threshold`; lower-bound checks therefore report their
/// statistic as a deficit (floor minus observed minimum).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub n_dim: usize,
    pub n_samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckReport {
    pub const CSV_HEADER: &'static str = "name,N,n,trials,seed,statistic,threshold,passed";

    fn new(
        name: &str,
        n_dim: usize,
        n_samples: usize,
        trials: usize,
        seed: u64,
        statistic: f64,
        threshold: f64,
    ) -> Self {
        Self {
            name: name.to_string(),
            n_dim,
            n_samples,
            trials,
            seed,
            statistic,
            threshold,
            passed: statistic <= threshold,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.name,
            self.n_dim,
            self.n_samples,
            self.trials,
            self.seed,
            self.statistic,
            self.threshold,
            u8::from(self.passed)
        )
    }
}

/// Test-matrix families for the trace-concentration statistic.
#[derive(Debug, Clone, Copy)]
pub enum TraceMatrix {
    Zero,
    Identity,
    /// Diagonal entries uniform on `[-kappa, kappa]`; spectral norm is
    /// bounded by `kappa` by construction.
    UniformDiagonal(f64),
}

/// Vector models for the trace-concentration statistic.
#[derive(Debug, Clone, Copy)]
pub enum TraceVector {
    /// `[s; w]` with Gaussian `s` of dimension K = N/2 and fixed-norm `w`.
    Composite,
    /// Plain standard complex Gaussian of dimension N.
    PlainGaussian,
}

/// `max_j |(1/N) z_j* A_j z_j - (1/N) tr A_j|` over `n_samples` independent
/// pairs per trial, maximized over trials.
pub fn trace_lemma_statistic(
    n_dim: usize,
    n_samples: usize,
    matrix: TraceMatrix,
    vector: TraceVector,
    trials: usize,
    seed: u64,
) -> f64 {
    let k_rank = n_dim / 2;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &[10, t as u64]);
            let mut worst = 0.0_f64;
            for _ in 0..n_samples {
                let z: Vec<C64> = match vector {
                    TraceVector::Composite => {
                        let mut z: Vec<C64> =
                            (0..k_rank).map(|_| standard_complex(&mut rng)).collect();
                        z.extend(unit_sphere_scaled(&mut rng, n_dim).iter().copied());
                        z
                    }
                    TraceVector::PlainGaussian => {
                        (0..n_dim).map(|_| standard_complex(&mut rng)).collect()
                    }
                };
                let dim = z.len();
                let (quad, trace) = match matrix {
                    TraceMatrix::Zero => (0.0, 0.0),
                    TraceMatrix::Identity => {
                        (z.iter().map(|x| x.norm_sqr()).sum::<f64>(), dim as f64)
                    }
                    TraceMatrix::UniformDiagonal(kappa) => {
                        let mut quad = 0.0;
                        let mut trace = 0.0;
                        for x in &z {
                            let d = kappa * (2.0 * rng.gen::<f64>() - 1.0);
                            quad += d * x.norm_sqr();
                            trace += d;
                        }
                        (quad, trace)
                    }
                };
                worst = worst.max((quad - trace).abs() / n_dim as f64);
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Quadratic-form concentration: independent bounded-norm matrices against
/// composite vectors. Passes while the worst deviation stays below the
/// calibrated `O(kappa / sqrt(N))` band.
pub fn check_trace_lemma(
    n_dim: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
    kappa: f64,
) -> CheckReport {
    let statistic = trace_lemma_statistic(
        n_dim,
        n_samples,
        TraceMatrix::UniformDiagonal(kappa),
        TraceVector::Composite,
        trials,
        seed,
    );
    let threshold = calibration::TRACE_LEMMA_COEFF * kappa / (n_dim as f64).sqrt();
    CheckReport::new(
        "trace_lemma",
        n_dim,
        n_samples,
        trials,
        seed,
        statistic,
        threshold,
    )
}

/// Smallest eigenvalue of `Sigma_j = Sigma - c_j c_j*` for a rank-one
/// deflation, via the secular equation `sum_k |d_k|^2/(l_k - x) = 1` on
/// `[l_1 - |c|^2, l_1)` in the eigenbasis of `Sigma`.
fn deflated_smallest_eigenvalue(eigs: &[f64], proj: &CVector) -> f64 {
    let norm_sq = proj.norm_squared();
    let mut lo = eigs[0] - norm_sq;
    let mut hi = eigs[0];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let f: f64 = eigs
            .iter()
            .zip(proj.iter())
            .map(|(&l, d)| d.norm_sqr() / (l - mid))
            .sum();
        if f < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(min_j l_1(Sigma_j), l_1(Sigma))` for one draw of
/// `Sigma = (1/n) sum w_i w_i*` over fixed-norm directions.
pub fn smallest_loo_eigenvalues(n_dim: usize, n_samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_for(seed, &[11]);
    let columns: Vec<CVector> = (0..n_samples)
        .map(|_| unit_sphere_scaled(&mut rng, n_dim) / C64::new((n_samples as f64).sqrt(), 0.0))
        .collect();
    let y = CMatrix::from_columns(&columns);
    let mut sigma = &y * y.adjoint();
    linalg::hermitize(&mut sigma);
    let (eigs, vectors) = linalg::eigh(&sigma);
    let min_loo = (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let proj = vectors.adjoint() * &columns[j];
            deflated_smallest_eigenvalue(&eigs, &proj)
        })
        .reduce(|| f64::INFINITY, f64::min);
    (min_loo, eigs[0])
}

/// Verifies that every leave-one-out covariance stays uniformly
/// well-conditioned: `min_j l_1(Sigma_j)` must clear the calibrated floor.
/// Statistic is the deficit `floor - min`, so negative values pass with
/// margin. Tight aspect ratios (n < 2N) are flagged, not rejected.
pub fn check_smallest_eigenvalue(
    n_dim: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> CheckReport {
    let min_over_trials = (0..trials)
        .map(|t| smallest_loo_eigenvalues(n_dim, n_samples, seed.wrapping_add(t as u64 * 7919)).0)
        .fold(f64::INFINITY, f64::min);
    let statistic = calibration::SMALLEST_EIG_FLOOR - min_over_trials;
    CheckReport::new(
        "smallest_eigenvalue",
        n_dim,
        n_samples,
        trials,
        seed,
        statistic,
        0.0,
    )
}

/// Wilson lower confidence bound at 95% for a binomial proportion.
fn wilson_lower(successes: usize, total: usize) -> f64 {
    let z = 1.959963984540054_f64;
    let m = total as f64;
    let p = successes as f64 / m;
    let z2 = z * z;
    let center = p + z2 / (2.0 * m);
    let spread = z * (p * (1.0 - p) / m + z2 / (4.0 * m * m)).sqrt();
    ((center - spread) / (1.0 + z2 / m)).max(0.0)
}

/// Tail bound for centered weighted sums of unit-rate exponentials:
/// `P[sum a_i (g_i - 1) > t] <= e^{1/2} exp(-min(t^2/(4 sum a^2), t/(4 max a)))`.
/// The Chernoff argument needs the centering (the log-MGF of `g - 1` is
/// what `-ln(1-x) - x <= x^2` controls); the uncentered sum admits no such
/// bound below its mean.
pub fn concentration_bound(alphas: &[f64], t: f64) -> f64 {
    let sum_sq: f64 = alphas.iter().map(|a| a * a).sum();
    let max_a = alphas.iter().copied().fold(0.0, f64::max);
    let exponent = (t * t / (4.0 * sum_sq)).min(t / (4.0 * max_a));
    calibration::CONCENTRATION_PREFACTOR_SQ.sqrt() * (-exponent).exp()
}

/// Monte Carlo audit of the exponential tail bound on a grid of
/// thresholds. The statistic is the worst signed excess of the Wilson
/// lower bound over the analytic bound; any positive value is a
/// statistically significant violation.
pub fn check_concentration(
    alphas: &[f64],
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> CheckReport {
    let mut rng = rng_for(seed, &[12]);
    let mut exceed = vec![0usize; t_grid.len()];
    for _ in 0..trials {
        let sum: f64 = alphas
            .iter()
            .map(|&a| {
                let g: f64 = rng.sample(Exp1);
                a * (g - 1.0)
            })
            .sum();
        for (k, &t) in t_grid.iter().enumerate() {
            if sum > t {
                exceed[k] += 1;
            }
        }
    }
    let statistic = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| wilson_lower(exceed[k], trials) - concentration_bound(alphas, t))
        .fold(f64::NEG_INFINITY, f64::max);
    CheckReport::new(
        "concentration",
        0,
        alphas.len(),
        trials,
        seed,
        statistic,
        0.0,
    )
}

/// Median spectral gap between the fixed-norm model and the raw-Gaussian
/// model built from the same draws, `|(1/n) sum w w* - (1/n) sum g g*|`.
pub fn gaussian_equivalence_median(
    n_dim: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut gaps: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &[13, t as u64]);
            let mut sigma = CMatrix::zeros(n_dim, n_dim);
            let mut sigma_raw = CMatrix::zeros(n_dim, n_dim);
            for _ in 0..n_samples {
                let g = CVector::from_fn(n_dim, |_, _| standard_complex(&mut rng));
                let w = &g * C64::new((n_dim as f64).sqrt() / g.norm(), 0.0);
                sigma += &w * w.adjoint();
                sigma_raw += &g * g.adjoint();
            }
            sigma /= C64::new(n_samples as f64, 0.0);
            sigma_raw /= C64::new(n_samples as f64, 0.0);
            let mut diff = sigma - sigma_raw;
            linalg::hermitize(&mut diff);
            linalg::hermitian_spectral_norm(&diff)
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// Compares the fixed-norm and raw-Gaussian models at `(N, n)` and
/// `(4N, 4n)`: the median gap must shrink with size and stay below the
/// calibrated cap at the larger size.
pub fn check_gaussian_equivalence(
    n_dim: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> CheckReport {
    let small = gaussian_equivalence_median(n_dim, n_samples, trials, seed);
    let large = gaussian_equivalence_median(4 * n_dim, 4 * n_samples, trials, seed);
    CheckReport::new(
        "gaussian_equivalence",
        n_dim,
        n_samples,
        trials,
        seed,
        large,
        calibration::GAUSSIAN_EQUIV_LIMIT.min(small),
    )
}
