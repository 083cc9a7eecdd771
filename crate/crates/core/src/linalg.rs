//! Internal helpers for Hermitian matrix numerics.

use crate::{C64, CMatrix};
use nalgebra::SymmetricEigen;

/// Largest absolute deviation from Hermitian symmetry.
pub(crate) fn hermitian_defect(m: &CMatrix) -> f64 {
    let (r, c) = m.shape();
    if r != c {
        return f64::INFINITY;
    }
    let mut defect = 0.0_f64;
    for i in 0..r {
        for j in i..r {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > defect {
                defect = d;
            }
        }
    }
    defect
}

/// Largest entry modulus; scale reference for relative tolerances.
pub(crate) fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Enforces exact Hermitian symmetry, `(M + M*) / 2` in place.
pub(crate) fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order. The caller must have validated symmetry.
pub(crate) fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub(crate) fn eigh_values(m: &CMatrix) -> Vec<f64> {
    let se = SymmetricEigen::new(m.clone());
    let mut values: Vec<f64> = se.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Spectral norm of a Hermitian matrix (largest eigenvalue modulus).
pub(crate) fn hermitian_spectral_norm(m: &CMatrix) -> f64 {
    eigh_values(m)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}

/// Frobenius norm.
pub(crate) fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
