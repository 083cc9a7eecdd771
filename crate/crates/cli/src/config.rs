//! Run configuration: one self-describing JSON document per run, with
//! sections for the data model, the weight family, solver tolerances, and
//! the experiment sweep. Every field has a default; the resolved document
//! (defaults filled in, seed override applied) is echoed into the output
//! directory of every run.

use robust_scatter::harness::ExperimentConfig;
use robust_scatter::measures::DiscreteMeasure;
use robust_scatter::weights::{WeightError, WeightFamily, WeightKind};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub weight: WeightKind,
    pub solver: SolverConfig,
    pub experiment: ExperimentSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            weight: WeightKind::ShiftedInverse { alpha: 0.5 },
            solver: SolverConfig::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Population dimension for single-instance subcommands.
    pub n_dim: usize,
    /// Samples per dimension, `n = round(ratio_n * N)`.
    pub ratio_n: f64,
    /// Signal rank per dimension, `K = max(1, round(ratio_k * N))`.
    pub ratio_k: f64,
    /// Scale distribution (unit mean).
    pub nu: DiscreteMeasure,
    /// Optional mass-concentration checkpoint: warn when the scale law
    /// puts too much mass below this point.
    pub mass_check_m: Option<f64>,
    /// Optional observation-set fixture (JSON); when set, single-instance
    /// subcommands load it instead of generating data.
    pub fixture_path: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_dim: 100,
            ratio_n: 3.0,
            ratio_k: 0.5,
            nu: DiscreteMeasure::point_mass(1.0).expect("point mass is a valid measure"),
            mass_check_m: None,
            fixture_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Scatter fixed-point tolerance.
    pub tol: f64,
    /// Scatter sweep cap.
    pub max_iter: usize,
    /// Equivalent-system tolerance.
    pub equiv_tol: f64,
    /// Equivalent-system sweep cap.
    pub equiv_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: robust_scatter::estimator::DEFAULT_TOL,
            max_iter: robust_scatter::estimator::DEFAULT_MAX_ITER,
            equiv_tol: robust_scatter::equivalents::DEFAULT_TOL,
            equiv_max_iter: robust_scatter::equivalents::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Dimensions swept by `mse` and `diagnostics`.
    pub n_grid: Vec<usize>,
    /// Trials per grid point (also the per-check trial count for `checks`).
    pub trials: usize,
    /// Master seed; `--seed` overrides.
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_grid: vec![20, 40, 80, 160],
            trials: 100,
            seed: 42,
            threads: 0,
        }
    }
}

impl Config {
    pub fn alpha(&self) -> f64 {
        match self.weight {
            WeightKind::ShiftedInverse { alpha } => alpha,
        }
    }

    /// Weight family at the realized aspect ratio of an `(N, n)` pair.
    pub fn weight_family(&self, n_dim: usize, n: usize) -> Result<WeightFamily, WeightError> {
        WeightFamily::new(self.weight, n_dim as f64 / n as f64)
    }

    /// `(n, K)` for the single-instance model section.
    pub fn model_sizes(&self) -> (usize, usize) {
        let n = (self.model.ratio_n * self.model.n_dim as f64).round() as usize;
        let k = ((self.model.ratio_k * self.model.n_dim as f64).round() as usize).max(1);
        (n, k)
    }

    /// The sweep configuration consumed by the harness.
    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_grid: self.experiment.n_grid.clone(),
            ratio_n: self.model.ratio_n,
            ratio_k: self.model.ratio_k,
            alpha: self.alpha(),
            nu: self.model.nu.clone(),
            trials: self.experiment.trials,
            seed: self.experiment.seed,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }
}
