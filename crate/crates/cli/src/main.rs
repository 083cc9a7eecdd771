//! Command-line front end.
//!
//! Subcommands: `estimate` (one scatter solve), `equivalents` (the coupled
//! equivalent system on one instance), `mse` (Monte Carlo sweep of
//! `|S - C|^2`), `diagnostics` (per-trial gap rows), `checks` (the
//! statistical check battery). JSON config in, CSV out; outputs are written
//! atomically and every run echoes its resolved configuration.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration rejected,
//! 3 solver non-convergence beyond policy.

mod config;

use clap::{Args, Parser, Subcommand};
use config::Config;
use robust_scatter::datagen::{generate_mixing, generate_observations, ObservationSet};
use robust_scatter::equivalents::{solve_delta_system, solve_eta};
use robust_scatter::harness::{
    run_equivalence_diagnostics, run_mse_experiment, write_aggregate_csv, write_diag_csv,
    write_trial_csv,
};
use robust_scatter::measures::{empirical_measure, spectral_measure};
use robust_scatter::rmt_checks::{
    check_concentration, check_gaussian_equivalence, check_smallest_eigenvalue,
    check_trace_lemma, CheckReport,
};
use robust_scatter::seed::derive_seed;
use robust_scatter::estimator::solve_maronna;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "robust-scatter", version, about = "Robust scatter estimation and its deterministic equivalents")]
struct Cli {
    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    print_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scatter fixed point on one generated (or fixture) instance.
    Estimate(RunArgs),
    /// Solve the coupled equivalent system on one instance.
    Equivalents(RunArgs),
    /// Monte Carlo sweep of the squared spectral gap across the size grid.
    Mse(RunArgs),
    /// Per-trial equivalence gap rows across the size grid.
    Diagnostics(RunArgs),
    /// Run the statistical check battery.
    Checks(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print progress and configuration warnings.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

enum CliError {
    Io(String),
    Config(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Solver(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_default_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&Config::default()).expect("default config serializes")
        );
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    let result = match &command {
        Command::Estimate(args) => run_estimate(args),
        Command::Equivalents(args) => run_equivalents(args),
        Command::Mse(args) => run_mse(args),
        Command::Diagnostics(args) => run_diagnostics(args),
        Command::Checks(args) => run_checks(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<Config, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut cfg: Config = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if cfg.experiment.threads > 0 {
        // Best effort; the pool may already exist in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.experiment.threads)
            .build_global();
    }
    cfg.experiment_config()
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if args.verbose > 0 {
        if let Some(m) = cfg.model.mass_check_m {
            let phi_inf = 1.0 + cfg.alpha();
            if let Some(warning) = cfg.model.nu.mass_condition_warning(m, phi_inf) {
                eprintln!("warning: {warning}");
            }
        }
    }
    Ok(cfg)
}

/// Writes a file atomically: temp file in the target directory, then rename.
fn atomic_write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = dir.join(format!(".tmp-{name}"));
    let target = dir.join(name);
    fs::write(&tmp, contents).map_err(|e| CliError::Io(format!("write {name}: {e}")))?;
    fs::rename(&tmp, &target).map_err(|e| CliError::Io(format!("rename {name}: {e}")))?;
    Ok(())
}

/// First line of every CSV: a timestamped comment, excluded from
/// byte-for-byte reproducibility comparisons.
fn stamp(subcommand: &str, cfg: &Config) -> String {
    format!(
        "# robust-scatter {subcommand} seed={} at {}\n",
        cfg.experiment.seed,
        chrono::Utc::now().to_rfc3339()
    )
}

fn echo_config(dir: &Path, cfg: &Config) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(cfg)
        .map_err(|e| CliError::Io(format!("serialize config: {e}")))?;
    atomic_write(dir, "resolved_config.json", &body)
}

/// Loads the fixture when configured, otherwise generates one instance
/// from the model section.
fn single_instance(cfg: &Config) -> Result<ObservationSet, CliError> {
    if let Some(path) = &cfg.model.fixture_path {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read fixture {}: {e}", path.display())))?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid fixture: {e}")));
    }
    let (n, k) = cfg.model_sizes();
    if n <= cfg.model.n_dim {
        return Err(CliError::Config(format!(
            "model gives n = {n} <= N = {}",
            cfg.model.n_dim
        )));
    }
    let seed = cfg.experiment.seed;
    let a = generate_mixing(cfg.model.n_dim, k, derive_seed(seed, &[100]))
        .map_err(|e| CliError::Config(e.to_string()))?;
    generate_observations(&a, &cfg.model.nu, n, derive_seed(seed, &[101]))
        .map_err(|e| CliError::Config(e.to_string()))
}

fn matrix_csv(m: &robust_scatter::CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = writeln!(out, "{i},{j},{},{}", m[(i, j)].re, m[(i, j)].im);
        }
    }
    out
}

fn run_estimate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let obs = single_instance(&cfg)?;
    if args.verbose > 0 {
        for w in obs.validate() {
            eprintln!("warning: {w}");
        }
    }
    let w = cfg
        .weight_family(obs.n_dim(), obs.n_samples())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let result = solve_maronna(&obs, &w, cfg.solver.tol, cfg.solver.max_iter)
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let header = stamp("estimate", &cfg);
    let mut q_csv = format!("{header}i,q\n");
    for (i, q) in result.q.iter().enumerate() {
        let _ = writeln!(q_csv, "{i},{q}");
    }
    atomic_write(&args.out_dir, "q.csv", &q_csv)?;
    atomic_write(
        &args.out_dir,
        "c_hat.csv",
        &format!("{header}{}", matrix_csv(&result.c_hat)),
    )?;
    atomic_write(
        &args.out_dir,
        "trace.csv",
        &format!("{header}{}", result.trace_csv()),
    )?;
    echo_config(&args.out_dir, &cfg)?;

    println!(
        "estimate: N={} n={} iterations={} residual={:.3e}",
        obs.n_dim(),
        obs.n_samples(),
        result.iterations,
        result.residual
    );
    if obs.n_dim() <= 10 || args.verbose > 1 {
        println!("C_hat =");
        for i in 0..result.c_hat.nrows() {
            let row: Vec<String> = (0..result.c_hat.ncols())
                .map(|j| {
                    let z = result.c_hat[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            println!("  [{}]", row.join(", "));
        }
        let q_strs: Vec<String> = result.q.iter().map(|q| format!("{q:.6}")).collect();
        println!("q = [{}]", q_strs.join(", "));
    }
    Ok(())
}

fn run_equivalents(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let obs = single_instance(&cfg)?;
    let w = cfg
        .weight_family(obs.n_dim(), obs.n_samples())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let result = solve_delta_system(
        obs.b(),
        obs.tau(),
        &w,
        cfg.solver.equiv_tol,
        cfg.solver.equiv_max_iter,
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;

    let fb = spectral_measure(obs.b()).map_err(|e| CliError::Solver(e.to_string()))?;
    let nu_n = empirical_measure(obs.tau()).map_err(|e| CliError::Solver(e.to_string()))?;
    let eta = solve_eta(&fb, &nu_n, |_| 1.0, cfg.solver.equiv_tol)
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let header = stamp("equivalents", &cfg);
    let mut csv = format!("{header}i,tau,delta\n");
    for (i, (&t, &d)) in obs.tau().iter().zip(&result.delta).enumerate() {
        let _ = writeln!(csv, "{i},{t},{d}");
    }
    atomic_write(&args.out_dir, "delta.csv", &csv)?;
    echo_config(&args.out_dir, &cfg)?;

    println!(
        "equivalents: N={} n={} chi={:.9} gamma={:.9} eta={:.9} iterations={} residual={:.3e}",
        obs.n_dim(),
        obs.n_samples(),
        result.chi_hat,
        result.gamma_hat,
        eta,
        result.iterations,
        result.residual
    );
    Ok(())
}

fn run_mse(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let experiment = cfg.experiment_config();
    let outcome = run_mse_experiment(&experiment).map_err(|e| CliError::Solver(e.to_string()))?;

    let header = stamp("mse", &cfg);
    let mut trials_csv = Vec::new();
    write_trial_csv(&outcome.records, &mut trials_csv)
        .map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(
        &args.out_dir,
        "mse_trials.csv",
        &format!("{header}{}", String::from_utf8_lossy(&trials_csv)),
    )?;

    let mut agg_csv = Vec::new();
    write_aggregate_csv(&outcome.points, &mut agg_csv).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(
        &args.out_dir,
        "mse_aggregate.csv",
        &format!("{header}{}", String::from_utf8_lossy(&agg_csv)),
    )?;
    echo_config(&args.out_dir, &cfg)?;

    for p in &outcome.points {
        println!(
            "N={}: mse={:.6e} stderr={:.2e} trials_ok={} mean_iters={:.1}",
            p.n_dim, p.mse, p.stderr, p.trials_ok, p.mean_iters
        );
    }
    if !outcome.failed_points.is_empty() {
        return Err(CliError::Solver(format!(
            "failed-trial budget exceeded at N in {:?}",
            outcome.failed_points
        )));
    }
    Ok(())
}

fn run_diagnostics(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let experiment = cfg.experiment_config();
    let rows = run_equivalence_diagnostics(&experiment)
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let header = stamp("diagnostics", &cfg);
    let mut body = Vec::new();
    write_diag_csv(&experiment, &rows, &mut body).map_err(|e| CliError::Io(e.to_string()))?;
    atomic_write(
        &args.out_dir,
        "diagnostics.csv",
        &format!("{header}{}", String::from_utf8_lossy(&body)),
    )?;
    echo_config(&args.out_dir, &cfg)?;

    let failed = rows.iter().filter(|r| !r.converged).count();
    println!("diagnostics: {} rows, {} failed", rows.len(), failed);
    if rows.is_empty() {
        return Ok(());
    }
    if failed as f64 > robust_scatter::harness::FAILED_TRIAL_BUDGET * rows.len() as f64 {
        return Err(CliError::Solver(format!(
            "{failed}/{} trials failed to converge",
            rows.len()
        )));
    }
    Ok(())
}

fn run_checks(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let n_dim = cfg.model.n_dim;
    let (n, _) = cfg.model_sizes();
    let trials = cfg.experiment.trials;
    let seed = cfg.experiment.seed;

    let alphas = vec![1.0 / n as f64; n];
    let t_grid = [1.5, 2.0, 3.0, 5.0];
    let reports = [
        check_trace_lemma(n_dim, n, trials, seed, 1.0),
        check_smallest_eigenvalue(n_dim.min(64), 3 * n_dim.min(64), trials, seed),
        check_concentration(&alphas, &t_grid, 100_000, seed),
        check_gaussian_equivalence(n_dim.min(64), 3 * n_dim.min(64), trials.max(3), seed),
    ];

    let header = stamp("checks", &cfg);
    let mut csv = format!("{header}{}\n", CheckReport::CSV_HEADER);
    for r in &reports {
        let _ = writeln!(csv, "{}", r.to_csv_row());
        println!(
            "{}: statistic={:.4e} threshold={:.4e} {}",
            r.name,
            r.statistic,
            r.threshold,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    atomic_write(&args.out_dir, "checks.csv", &csv)?;
    echo_config(&args.out_dir, &cfg)?;
    if reports.iter().any(|r| !r.passed) {
        eprintln!("warning: at least one statistical check failed; see checks.csv");
    }
    Ok(())
}
