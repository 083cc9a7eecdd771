//! Cross-module check: the normalized resolvent trace of the weighted
//! leave-one-out sample matrix agrees with the deterministic matrix built
//! from the e-system, and the gap shrinks with size.
//!
//! Thresholds recorded from the calibration probe (6 seeds, 3 left-out
//! columns each): worst gap 0.0169 at N = 30, 0.0090 at N = 60, 0.0052 at
//! N = 120 (see `calibration.rs`).

use robust_scatter::datagen::{generate_mixing, generate_observations};
use robust_scatter::equivalents::{solve_e_system, solve_eta};
use robust_scatter::measures::{empirical_measure, spectral_measure, DiscreteMeasure};
use robust_scatter::nalgebra::Cholesky;
use robust_scatter::{C64, CMatrix, CVector};

/// Worst |(1/n) tr Sigma_j^{-1} - (1/n) tr M^{-1}| over a few left-out
/// columns and seeds, with M the e-system's averaged matrix.
fn worst_trace_gap(n_dim: usize, seeds: std::ops::Range<u64>) -> f64 {
    let n = 3 * n_dim;
    let mut worst = 0.0f64;
    for seed in seeds {
        let a = generate_mixing(n_dim, n_dim / 2, 900 + seed).unwrap();
        let nu = DiscreteMeasure::uniform(vec![0.5, 1.5]).unwrap();
        let obs = generate_observations(&a, &nu, n, 900 + seed).unwrap();
        let fb = spectral_measure(obs.b()).unwrap();
        let nu_n = empirical_measure(obs.tau()).unwrap();
        let eta = solve_eta(&fb, &nu_n, |_| 1.0, 1e-11).unwrap();
        let e = solve_e_system(obs.b(), obs.tau(), |_| 1.0, eta, 1e-12, 10_000).unwrap();

        let mut m = CMatrix::zeros(n_dim, n_dim);
        for (i, &t) in obs.tau().iter().enumerate() {
            let factor = 1.0 / ((t + eta) * (1.0 + e[i])) / n as f64;
            m += obs.b() * C64::new(factor, 0.0);
            for d in 0..n_dim {
                m[(d, d)] += C64::new(factor * t, 0.0);
            }
        }
        let m_inv = Cholesky::new(m).unwrap().inverse();
        let tr_m_inv: f64 = (0..n_dim).map(|d| m_inv[(d, d)].re).sum();

        for j in [0usize, n / 2, n - 1] {
            let mut sigma = CMatrix::zeros(n_dim, n_dim);
            for (i, &t) in obs.tau().iter().enumerate() {
                if i == j {
                    continue;
                }
                let y_i = CVector::from(obs.y().column(i));
                sigma += &y_i * y_i.adjoint() * C64::new(1.0 / ((t + eta) * n as f64), 0.0);
            }
            let inv = Cholesky::new(sigma).unwrap().inverse();
            let tr_s: f64 = (0..n_dim).map(|d| inv[(d, d)].re).sum();
            worst = worst.max((tr_s - tr_m_inv).abs() / n as f64);
        }
    }
    worst
}

#[test]
fn resolvent_trace_matches_e_system_equivalent() {
    let gap = worst_trace_gap(60, 0..3);
    assert!(gap <= 0.02, "trace gap {gap} at N = 60");
}

#[test]
fn resolvent_trace_gap_shrinks_with_size() {
    let coarse = worst_trace_gap(30, 0..3);
    let fine = worst_trace_gap(120, 0..3);
    assert!(
        fine < coarse,
        "gap did not shrink: {coarse} at N = 30 vs {fine} at N = 120"
    );
}
