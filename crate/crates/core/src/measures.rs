//! Finite discrete probability measures.
//!
//! A [`DiscreteMeasure`] represents the noise-scale distribution, its
//! empirical counterpart, and eigenvalue distributions of Hermitian
//! matrices. Restricting to finite support turns every fixed-point equation
//! downstream into a finite sum, so the solvers are deterministic and
//! directly testable. A continuous scale law is represented by a
//! high-resolution discretization supplied by the caller.
//!
//! Compact support also settles the asymptotic tail condition on the scale
//! law for free (the tail mass is identically zero beyond the largest
//! atom), so no runtime check exists for it; only the no-mass-near-zero
//! condition is ever at stake, via [`DiscreteMeasure::mass_condition_warning`].

use crate::linalg;
use crate::seed::rng_for;
use crate::CMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total mass at construction.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on the unit-mean requirement for scale sampling.
pub const UNIT_MEAN_TOL: f64 = 1e-6;
/// Hermitian defect tolerance for spectral measures, relative to the
/// largest entry.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measure needs at least one atom")]
    EmptySupport,
    #[error("atom {0} is not a finite non-negative real")]
    InvalidAtom(f64),
    #[error("weight {0} is not strictly positive and finite")]
    InvalidWeight(f64),
    #[error("atoms and weights have different lengths ({atoms} vs {weights})")]
    LengthMismatch { atoms: usize, weights: usize },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("integrand is not finite at atom {atom}")]
    NonFiniteValue { atom: f64 },
    #[error("measure has mean {0}, expected 1 for scale sampling")]
    NotUnitMean(f64),
    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {0}")]
    NotPsd(f64),
    #[error("need n >= 1 samples")]
    EmptySample,
}

/// A finite measure `sum_k weights[k] * dirac(atoms[k])` with total mass 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        if atoms.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                atoms: atoms.len(),
                weights: weights.len(),
            });
        }
        for &a in &atoms {
            if !a.is_finite() || a < 0.0 {
                return Err(MeasureError::InvalidAtom(a));
            }
        }
        for &w in &weights {
            if !w.is_finite() || w <= 0.0 {
                return Err(MeasureError::InvalidWeight(w));
            }
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::NotNormalized(mass));
        }
        Ok(Self { atoms, weights })
    }

    /// Unit mass at a single point.
    pub fn point_mass(atom: f64) -> Result<Self, MeasureError> {
        Self::new(vec![atom], vec![1.0])
    }

    /// Equal weights on the given atoms.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self, MeasureError> {
        let k = atoms.len();
        if k == 0 {
            return Err(MeasureError::EmptySupport);
        }
        Self::new(atoms, vec![1.0 / k as f64; k])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.atoms.iter().all(|&a| a == self.atoms[0])
    }

    /// `integral f dmu = sum_k weights[k] f(atoms[k])`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64, MeasureError> {
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            let fa = f(a);
            if !fa.is_finite() {
                return Err(MeasureError::NonFiniteValue { atom: a });
            }
            acc += w * fa;
        }
        Ok(acc)
    }

    /// Mean of the measure.
    pub fn mean(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| a * w)
            .sum()
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms.iter().copied().fold(0.0, f64::max)
    }

    /// Draws `n` independent scale samples. The measure must have unit mean
    /// (the normalization the data model imposes on the scale law).
    /// Reproducible: a fixed seed yields a fixed sequence.
    pub fn sample_tau(&self, n: usize, seed: u64) -> Result<Vec<f64>, MeasureError> {
        if n == 0 {
            return Err(MeasureError::EmptySample);
        }
        let mean = self.mean();
        if (mean - 1.0).abs() > UNIT_MEAN_TOL {
            return Err(MeasureError::NotUnitMean(mean));
        }
        let mut cdf = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let mut rng = rng_for(seed, &[]);
        Ok((0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let k = cdf.partition_point(|&c| c < u).min(self.atoms.len() - 1);
                self.atoms[k]
            })
            .collect())
    }

    /// Checks the no-mass-near-zero condition: the mass below `m` must stay
    /// under `1 - 1/phi_inf`. A violation degrades the theory but the
    /// solvers still run, so it surfaces as a warning string, not an error.
    pub fn mass_condition_warning(&self, m: f64, phi_inf: f64) -> Option<String> {
        let below: f64 = self
            .atoms
            .iter()
            .zip(&self.weights)
            .filter(|(&a, _)| a < m)
            .map(|(_, &w)| w)
            .sum();
        let cap = 1.0 - 1.0 / phi_inf;
        if below >= cap {
            Some(format!(
                "mass {below:.4} below m = {m} exceeds the admissible bound {cap:.4}; \
                 finite-size guarantees degrade"
            ))
        } else {
            None
        }
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            atoms: Vec<f64>,
            weights: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        DiscreteMeasure::new(raw.atoms, raw.weights).map_err(serde::de::Error::custom)
    }
}

/// Empirical spectral distribution of a Hermitian PSD matrix: one atom per
/// eigenvalue (ascending, repeats kept), uniform weights `1/N`.
pub fn spectral_measure(b: &CMatrix) -> Result<DiscreteMeasure, MeasureError> {
    let scale = linalg::max_entry(b).max(1.0);
    let defect = linalg::hermitian_defect(b);
    let tol = HERMITIAN_TOL * scale;
    if defect > tol {
        return Err(MeasureError::NotHermitian { defect, tol });
    }
    let mut values = linalg::eigh_values(b);
    for v in &mut values {
        if *v < 0.0 {
            if *v < -1e-8 * scale {
                return Err(MeasureError::NotPsd(*v));
            }
            *v = 0.0;
        }
    }
    DiscreteMeasure::uniform(values)
}

/// Empirical measure of a sample, merging equal values.
pub fn empirical_measure(samples: &[f64]) -> Result<DiscreteMeasure, MeasureError> {
    if samples.is_empty() {
        return Err(MeasureError::EmptySupport);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let unit = 1.0 / samples.len() as f64;
    for &s in &sorted {
        match atoms.last() {
            Some(&last) if last == s => *weights.last_mut().unwrap() += unit,
            _ => {
                atoms.push(s);
                weights.push(unit);
            }
        }
    }
    // Re-normalize the exact floating-point mass.
    let mass: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= mass;
    }
    DiscreteMeasure::new(atoms, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use approx::assert_relative_eq;

    #[test]
    fn construction_validates() {
        assert!(DiscreteMeasure::new(vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![-1.0], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn integrate_hand_values() {
        let point = DiscreteMeasure::point_mass(1.0).unwrap();
        assert_relative_eq!(point.integrate(|x| x).unwrap(), 1.0);

        let two = DiscreteMeasure::uniform(vec![0.5, 1.5]).unwrap();
        assert_relative_eq!(two.integrate(|x| x).unwrap(), 1.0);

        let three = DiscreteMeasure::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(three.integrate(|x| x * x).unwrap(), 14.0 / 3.0);

        assert!(three.integrate(|x| (x - 2.0).ln()).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_unit_mean() {
        let point = DiscreteMeasure::point_mass(1.0).unwrap();
        assert_eq!(point.sample_tau(5, 3).unwrap(), vec![1.0; 5]);

        let two = DiscreteMeasure::uniform(vec![0.5, 1.5]).unwrap();
        let a = two.sample_tau(10_000, 9).unwrap();
        let b = two.sample_tau(10_000, 9).unwrap();
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean = {mean}");

        let shifted = DiscreteMeasure::point_mass(2.0).unwrap();
        assert!(matches!(
            shifted.sample_tau(3, 0),
            Err(MeasureError::NotUnitMean(_))
        ));
    }

    #[test]
    fn disjoint_seeds_decorrelate() {
        let two = DiscreteMeasure::uniform(vec![0.5, 1.5]).unwrap();
        let a = two.sample_tau(10_000, 1).unwrap();
        let b = two.sample_tau(10_000, 2).unwrap();
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / a.len() as f64;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / b.len() as f64).sqrt();
        assert!((cov / (sa * sb)).abs() < 0.05);
    }

    #[test]
    fn spectral_measure_identity_and_diag() {
        let id = CMatrix::identity(3, 3);
        let mu = spectral_measure(&id).unwrap();
        assert_eq!(mu.atoms(), &[1.0, 1.0, 1.0]);
        assert_eq!(mu.weights(), &[1.0 / 3.0; 3]);

        let mut d = CMatrix::zeros(2, 2);
        d[(1, 1)] = C64::new(2.0, 0.0);
        let mu = spectral_measure(&d).unwrap();
        assert_eq!(mu.atoms(), &[0.0, 2.0]);
    }

    #[test]
    fn spectral_measure_matches_singular_values() {
        // Atoms of the spectrum of A A* must equal the squared singular
        // values of A.
        let mut rng = crate::seed::rng_for(11, &[]);
        let a = CMatrix::from_fn(4, 2, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let b = &a * a.adjoint();
        let mu = spectral_measure(&b).unwrap();
        let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(f64::total_cmp);
        // Rank is 2, so the two smallest atoms are zero.
        assert!(mu.atoms()[0].abs() < 1e-8);
        assert!(mu.atoms()[1].abs() < 1e-8);
        assert_relative_eq!(mu.atoms()[2], sv[0] * sv[0], epsilon = 1e-8);
        assert_relative_eq!(mu.atoms()[3], sv[1] * sv[1], epsilon = 1e-8);
    }

    #[test]
    fn spectral_measure_mean_is_normalized_trace() {
        let mut rng = crate::seed::rng_for(5, &[]);
        let a = CMatrix::from_fn(6, 6, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let b = &a * a.adjoint();
        let mu = spectral_measure(&b).unwrap();
        let trace: f64 = (0..6).map(|i| b[(i, i)].re).sum();
        assert_relative_eq!(mu.mean(), trace / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn spectral_measure_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(
            spectral_measure(&m),
            Err(MeasureError::NotHermitian { .. })
        ));
    }

    #[test]
    fn serde_round_trip() {
        let mu = DiscreteMeasure::new(vec![0.5, 1.5], vec![0.25, 0.75]).unwrap();
        let json = serde_json::to_string(&mu).unwrap();
        assert_eq!(json, r#"{"atoms":[0.5,1.5],"weights":[0.25,0.75]}"#);
        let back: DiscreteMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mu);

        let bad: Result<DiscreteMeasure, _> =
            serde_json::from_str(r#"{"atoms":[1.0],"weights":[0.5]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn mass_condition_warning_fires() {
        let mu = DiscreteMeasure::new(vec![0.01, 1.99], vec![0.5, 0.5]).unwrap();
        // phi_inf = 1.5 allows at most 1/3 of the mass below m.
        assert!(mu.mass_condition_warning(0.1, 1.5).is_some());
        assert!(mu.mass_condition_warning(0.001, 1.5).is_none());
    }

    #[test]
    fn empirical_measure_merges_atoms() {
        let mu = empirical_measure(&[1.0, 0.5, 1.0, 1.0]).unwrap();
        assert_eq!(mu.atoms(), &[0.5, 1.0]);
        assert_relative_eq!(mu.weights()[0], 0.25);
        assert_relative_eq!(mu.weights()[1], 0.75);
    }
}
