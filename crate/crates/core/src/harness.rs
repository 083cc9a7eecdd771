//! Monte Carlo experiment engine.
//!
//! Reproduces the scatter-vs-equivalent convergence experiment: for each
//! population dimension N in a grid, draw independent observation sets,
//! solve the scatter fixed point and the coupled equivalent system on each,
//! and record the squared spectral gap `|S - C|^2` together with the
//! per-sample pivot `max_i |q_i - delta_i| / delta_i`. Trials run
//! concurrently; every per-trial seed derives from the master seed and the
//! `(N, trial)` pair, so any subset of trials reproduces independently and
//! aggregation is order-free (pairwise summation).

use crate::datagen::{generate_mixing, generate_observations, DataError};
use crate::equivalents::{self, solve_delta_system, EquivalentsError};
use crate::estimator::{self, assemble_s_hat, solve_maronna, EstimatorError};
use crate::linalg;
use crate::measures::{DiscreteMeasure, MeasureError};
use crate::seed::derive_seed;
use crate::weights::{WeightError, WeightFamily};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// Largest tolerated fraction of failed trials per grid point.
pub const FAILED_TRIAL_BUDGET: f64 = 0.05;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Equivalents(#[from] EquivalentsError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Sweep setup: sizes, weight family shape, scale law, and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Population dimensions to sweep.
    pub n_grid: Vec<usize>,
    /// Samples per dimension, `n = round(ratio_n * N)`; must exceed 1.
    pub ratio_n: f64,
    /// Signal rank per dimension, `K = max(1, round(ratio_k * N))`.
    pub ratio_k: f64,
    /// Shape parameter of the shifted-inverse weight family.
    pub alpha: f64,
    /// Scale distribution (unit mean).
    pub nu: DiscreteMeasure,
    /// Independent observation sets per grid point.
    pub trials: usize,
    /// Master seed.
    pub seed: u64,
    /// Scatter solver tolerance.
    pub tol: f64,
    /// Scatter solver sweep cap.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_max_iter() -> usize {
    estimator::DEFAULT_MAX_ITER
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.ratio_n <= 1.0 {
            return Err(HarnessError::InvalidConfig(format!(
                "ratio_n = {} must exceed 1 so that c = N/n < 1",
                self.ratio_n
            )));
        }
        if !(self.ratio_k > 0.0 && self.ratio_k <= 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "ratio_k = {} must lie in (0, 1]",
                self.ratio_k
            )));
        }
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(HarnessError::InvalidConfig(format!(
                "tol = {} must be positive",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(HarnessError::InvalidConfig("max_iter must be >= 1".into()));
        }
        let c = 1.0 / self.ratio_n;
        if c * (1.0 + self.alpha) >= 1.0 {
            return Err(HarnessError::InvalidConfig(format!(
                "c (1 + alpha) = {} >= 1 violates the existence condition",
                c * (1.0 + self.alpha)
            )));
        }
        for &n_dim in &self.n_grid {
            let (n, _) = self.sizes(n_dim);
            if n <= n_dim {
                return Err(HarnessError::InvalidConfig(format!(
                    "N = {n_dim} gives n = {n} <= N"
                )));
            }
        }
        Ok(())
    }

    /// `(n, K)` for a grid point.
    pub fn sizes(&self, n_dim: usize) -> (usize, usize) {
        let n = (self.ratio_n * n_dim as f64).round() as usize;
        let k = ((self.ratio_k * n_dim as f64).round() as usize).max(1);
        (n, k)
    }

    /// Weight family at the exact realized aspect ratio of a grid point.
    pub fn weight_family(&self, n_dim: usize) -> Result<WeightFamily, WeightError> {
        let (n, _) = self.sizes(n_dim);
        WeightFamily::shifted_inverse(self.alpha, n_dim as f64 / n as f64)
    }
}

/// One trial's metrics. Failed trials keep their size and index but carry
/// no numbers, so nothing contributes to aggregates silently.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub n_dim: usize,
    pub trial: usize,
    pub mse_spectral: Option<f64>,
    pub mse_frobenius: Option<f64>,
    pub q_delta_gap: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// Aggregate over the converged trials of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MsePoint {
    pub n_dim: usize,
    pub mse: f64,
    pub stderr: f64,
    pub mean_iters: f64,
    pub trials_ok: usize,
}

/// Full sweep outcome.
#[derive(Debug, Clone)]
pub struct MseOutcome {
    pub points: Vec<MsePoint>,
    pub records: Vec<TrialRecord>,
    /// Grid points whose failed-trial fraction exceeded the budget.
    pub failed_points: Vec<usize>,
}

/// Order-independent sum: splits recursively so the result does not depend
/// on accumulation order or thread schedule.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1..=8 => xs.iter().sum(),
        len => {
            let (lo, hi) = xs.split_at(len / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

struct TrialMetrics {
    spectral_gap: f64,
    frobenius_gap: f64,
    q_delta_gap: f64,
    iters: usize,
}

fn run_trial(
    cfg: &ExperimentConfig,
    n_dim: usize,
    trial: usize,
) -> Result<TrialMetrics, HarnessError> {
    let (n, k) = cfg.sizes(n_dim);
    let w = cfg.weight_family(n_dim)?;
    let seed_mix = derive_seed(cfg.seed, &[n_dim as u64, trial as u64, 0]);
    let seed_obs = derive_seed(cfg.seed, &[n_dim as u64, trial as u64, 1]);
    let a = generate_mixing(n_dim, k, seed_mix)?;
    let obs = generate_observations(&a, &cfg.nu, n, seed_obs)?;

    let scatter = solve_maronna(&obs, &w, cfg.tol, cfg.max_iter)?;
    let equiv = solve_delta_system(
        obs.b(),
        obs.tau(),
        &w,
        equivalents::DEFAULT_TOL,
        equivalents::DEFAULT_MAX_ITER,
    )?;
    let s_hat = assemble_s_hat(&obs, &w, &equiv.delta)?;
    let diff = &s_hat - &scatter.c_hat;
    let spectral_gap = estimator::spectral_norm(&diff)?;
    let frobenius_gap = linalg::frobenius_norm(&diff);
    let q_delta_gap = scatter
        .q
        .iter()
        .zip(&equiv.delta)
        .map(|(&q, &d)| (q - d).abs() / d)
        .fold(0.0_f64, f64::max);
    Ok(TrialMetrics {
        spectral_gap,
        frobenius_gap,
        q_delta_gap,
        iters: scatter.iterations,
    })
}

/// Solver failures mark the trial as failed; anything else (bad config,
/// bad measure) aborts the sweep.
fn record_for(
    cfg: &ExperimentConfig,
    n_dim: usize,
    trial: usize,
) -> Result<TrialRecord, HarnessError> {
    match run_trial(cfg, n_dim, trial) {
        Ok(m) => Ok(TrialRecord {
            n_dim,
            trial,
            mse_spectral: Some(m.spectral_gap * m.spectral_gap),
            mse_frobenius: Some(m.frobenius_gap * m.frobenius_gap),
            q_delta_gap: Some(m.q_delta_gap),
            iters: m.iters,
            converged: true,
        }),
        Err(HarnessError::Estimator(EstimatorError::NoConvergence { iterations, .. })) => {
            Ok(TrialRecord {
                n_dim,
                trial,
                mse_spectral: None,
                mse_frobenius: None,
                q_delta_gap: None,
                iters: iterations,
                converged: false,
            })
        }
        Err(HarnessError::Estimator(EstimatorError::SingularIterate(_)))
        | Err(HarnessError::Equivalents(EquivalentsError::NoConvergence { .. })) => {
            Ok(TrialRecord {
                n_dim,
                trial,
                mse_spectral: None,
                mse_frobenius: None,
                q_delta_gap: None,
                iters: 0,
                converged: false,
            })
        }
        Err(other) => Err(other),
    }
}

/// Runs the full sweep: `trials` independent sets per grid point,
/// aggregated with pairwise summation over the converged trials.
pub fn run_mse_experiment(cfg: &ExperimentConfig) -> Result<MseOutcome, HarnessError> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    let mut records = Vec::with_capacity(cfg.n_grid.len() * cfg.trials);
    let mut failed_points = Vec::new();
    for &n_dim in &cfg.n_grid {
        let point_records: Vec<Result<TrialRecord, HarnessError>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| record_for(cfg, n_dim, trial))
            .collect();
        let mut ok_mse = Vec::new();
        let mut ok_iters = Vec::new();
        for r in point_records {
            let r = r?;
            if let (true, Some(mse)) = (r.converged, r.mse_spectral) {
                ok_mse.push(mse);
                ok_iters.push(r.iters as f64);
            }
            records.push(r);
        }
        let failed = cfg.trials - ok_mse.len();
        if (failed as f64) > FAILED_TRIAL_BUDGET * cfg.trials as f64 {
            failed_points.push(n_dim);
        }
        let m = ok_mse.len().max(1) as f64;
        let mean = pairwise_sum(&ok_mse) / m;
        let sq_dev: Vec<f64> = ok_mse.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if ok_mse.len() > 1 {
            pairwise_sum(&sq_dev) / (m - 1.0)
        } else {
            0.0
        };
        points.push(MsePoint {
            n_dim,
            mse: mean,
            stderr: (var / m).sqrt(),
            mean_iters: pairwise_sum(&ok_iters) / m,
            trials_ok: ok_mse.len(),
        });
    }
    Ok(MseOutcome {
        points,
        records,
        failed_points,
    })
}

/// Per-trial equivalence rows: the spectral gap `|C - S|` (not squared)
/// and the pivot `max_i |q_i - delta_i| / delta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub n_dim: usize,
    pub trial: usize,
    pub spectral_gap: Option<f64>,
    pub q_delta_gap: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

/// Runs the sweep and reports per-trial gap diagnostics. An empty grid is
/// a valid request producing an empty row set.
pub fn run_equivalence_diagnostics(cfg: &ExperimentConfig) -> Result<Vec<DiagRecord>, HarnessError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len() * cfg.trials);
    for &n_dim in &cfg.n_grid {
        let point_rows: Vec<Result<DiagRecord, HarnessError>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                record_for(cfg, n_dim, trial).map(|r| DiagRecord {
                    n_dim,
                    trial,
                    spectral_gap: r.mse_spectral.map(f64::sqrt),
                    q_delta_gap: r.q_delta_gap,
                    iters: r.iters,
                    converged: r.converged,
                })
            })
            .collect();
        for r in point_rows {
            rows.push(r?);
        }
    }
    Ok(rows)
}

/// Reference value of the per-sample solution in the fully degenerate case
/// (identity-like signal covariance, point-mass scales): `g(1) = 1/(1 - c)`.
pub fn degenerate_delta_reference(w: &WeightFamily) -> f64 {
    1.0 / (1.0 - w.c())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-trial CSV: `N,trial,mse_spectral,mse_frobenius,q_delta_gap,iters,converged`.
pub fn write_trial_csv(records: &[TrialRecord], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "N,trial,mse_spectral,mse_frobenius,q_delta_gap,iters,converged")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n_dim,
            r.trial,
            fmt_opt(r.mse_spectral),
            fmt_opt(r.mse_frobenius),
            fmt_opt(r.q_delta_gap),
            r.iters,
            u8::from(r.converged)
        )?;
    }
    Ok(())
}

/// Aggregate CSV: `N,mse_mean,mse_stderr,trials_ok`.
pub fn write_aggregate_csv(points: &[MsePoint], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "N,mse_mean,mse_stderr,trials_ok")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.n_dim, p.mse, p.stderr, p.trials_ok)?;
    }
    Ok(())
}

/// Diagnostics CSV with the degenerate reference line when the scale law
/// is a point mass: `N,trial,spectral_gap,q_delta_gap,iters,converged`.
pub fn write_diag_csv(
    cfg: &ExperimentConfig,
    rows: &[DiagRecord],
    out: &mut impl Write,
) -> io::Result<()> {
    if cfg.nu.is_point_mass() {
        let mut seen = Vec::new();
        for &n_dim in &cfg.n_grid {
            if let Ok(w) = cfg.weight_family(n_dim) {
                let c = w.c();
                if !seen.iter().any(|&x: &f64| (x - c).abs() < 1e-15) {
                    seen.push(c);
                    writeln!(
                        out,
                        "# delta_reference c={} value={}",
                        c,
                        degenerate_delta_reference(&w)
                    )?;
                }
            }
        }
    }
    writeln!(out, "N,trial,spectral_gap,q_delta_gap,iters,converged")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n_dim,
            r.trial,
            fmt_opt(r.spectral_gap),
            fmt_opt(r.q_delta_gap),
            r.iters,
            u8::from(r.converged)
        )?;
    }
    Ok(())
}
