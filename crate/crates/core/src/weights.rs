//! The weight function `u` and its derived functions.
//!
//! A [`WeightFamily`] bundles a non-increasing weight function `u` with the
//! aspect ratio `c = N/n` and exposes the derived functions that drive both
//! the scatter fixed point and its deterministic equivalents:
//!
//! - `phi(x) = x u(x)`, increasing and bounded by `phi_inf`;
//! - `g(x) = x / (1 - c phi(x))`, an increasing bijection of `[0, inf)`;
//! - `v = u o g^{-1}`, positive and non-increasing;
//! - `psi(x) = x v(x)`, increasing and bounded by
//!   `psi_inf = phi_inf / (1 - c phi_inf)`.
//!
//! Construction fails hard when `c * phi_inf >= 1`: every downstream solver
//! relies on that margin for existence of its fixed point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative residual at which the bisection inverse of `g` stops.
pub const G_INV_TOL: f64 = 1e-12;
/// Iteration cap for the bisection inverse of `g`.
pub const G_INV_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("shape parameter alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("aspect ratio c must lie in (0, 1), got {0}")]
    InvalidAspectRatio(f64),
    #[error("c * phi_inf = {0} >= 1 violates the existence condition")]
    ExistenceMargin(f64),
    #[error("weight functions are defined on [0, inf), got {0}")]
    NegativeArgument(f64),
    #[error("bracket expansion for g^-1({y}) failed after {G_INV_MAX_ITER} steps")]
    InverseBracket { y: f64 },
}

/// Named weight families. Each member supplies `u`, `phi` and `phi_inf`
/// analytically; the derived functions are generic over the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightKind {
    /// `u(t) = (1 + alpha) / (t + alpha)` with `alpha > 0`.
    ShiftedInverse { alpha: f64 },
}

/// A validated weight function together with the aspect ratio it is used at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFamily {
    kind: WeightKind,
    c: f64,
    phi_inf: f64,
    psi_inf: f64,
}

impl WeightFamily {
    /// Builds the shifted-inverse family `u(t) = (1 + alpha) / (t + alpha)`
    /// at aspect ratio `c`.
    pub fn shifted_inverse(alpha: f64, c: f64) -> Result<Self, WeightError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(WeightError::InvalidAlpha(alpha));
        }
        Self::new(WeightKind::ShiftedInverse { alpha }, c)
    }

    /// Builds a family from its kind tag, validating the existence margin.
    pub fn new(kind: WeightKind, c: f64) -> Result<Self, WeightError> {
        if !(c > 0.0 && c < 1.0) {
            return Err(WeightError::InvalidAspectRatio(c));
        }
        let phi_inf = match kind {
            WeightKind::ShiftedInverse { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(WeightError::InvalidAlpha(alpha));
                }
                1.0 + alpha
            }
        };
        let margin = c * phi_inf;
        if margin >= 1.0 {
            return Err(WeightError::ExistenceMargin(margin));
        }
        Ok(Self {
            kind,
            c,
            phi_inf,
            psi_inf: phi_inf / (1.0 - margin),
        })
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// Shape parameter of the family.
    pub fn alpha(&self) -> f64 {
        match self.kind {
            WeightKind::ShiftedInverse { alpha } => alpha,
        }
    }

    /// Aspect ratio `c = N/n`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// `phi_inf = lim_{x->inf} x u(x)`.
    pub fn phi_inf(&self) -> f64 {
        self.phi_inf
    }

    /// `psi_inf = phi_inf / (1 - c phi_inf)`.
    pub fn psi_inf(&self) -> f64 {
        self.psi_inf
    }

    fn check_domain(x: f64) -> Result<(), WeightError> {
        if x.is_nan() || x < 0.0 {
            return Err(WeightError::NegativeArgument(x));
        }
        Ok(())
    }

    /// Weight function `u(x)`. Strictly positive, non-increasing.
    pub fn eval_u(&self, x: f64) -> Result<f64, WeightError> {
        Self::check_domain(x)?;
        Ok(self.u_unchecked(x))
    }

    fn u_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            WeightKind::ShiftedInverse { alpha } => (1.0 + alpha) / (x + alpha),
        }
    }

    /// `phi(x) = x u(x)`, increasing, bounded by `phi_inf`.
    pub fn eval_phi(&self, x: f64) -> Result<f64, WeightError> {
        Self::check_domain(x)?;
        Ok(self.phi_unchecked(x))
    }

    fn phi_unchecked(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return self.phi_inf;
        }
        x * self.u_unchecked(x)
    }

    /// `g(x) = x / (1 - c phi(x))`, an increasing bijection of `[0, inf)`.
    pub fn eval_g(&self, x: f64) -> Result<f64, WeightError> {
        Self::check_domain(x)?;
        Ok(self.g_unchecked(x))
    }

    fn g_unchecked(&self, x: f64) -> f64 {
        x / (1.0 - self.c * self.phi_unchecked(x))
    }

    /// Inverse of `g`, monotone and 1-Lipschitz.
    ///
    /// The shifted-inverse family uses the closed-form quadratic root; the
    /// bisection path in [`Self::eval_g_inv_bisection`] is the generic
    /// fallback and the reference the closed form is validated against.
    pub fn eval_g_inv(&self, y: f64) -> Result<f64, WeightError> {
        Self::check_domain(y)?;
        match self.kind {
            WeightKind::ShiftedInverse { alpha } => {
                // g(x) = y reduces to x^2 + (alpha - beta y) x - alpha y = 0
                // with beta = 1 - c (1 + alpha); take the nonnegative root.
                let beta = 1.0 - self.c * (1.0 + alpha);
                let p = beta * y - alpha;
                let disc = (p * p + 4.0 * alpha * y).sqrt();
                let x = if p >= 0.0 {
                    0.5 * (p + disc)
                } else {
                    // Rearranged to avoid cancellation when p < 0.
                    2.0 * alpha * y / (disc - p)
                };
                Ok(x.max(0.0))
            }
        }
    }

    /// Inverse of `g` by monotone bisection with geometric bracket
    /// expansion. Unconditionally convergent since `g` is an increasing
    /// bijection with `g(x) >= x`.
    pub fn eval_g_inv_bisection(&self, y: f64) -> Result<f64, WeightError> {
        Self::check_domain(y)?;
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0_f64;
        let mut hi = y.max(1.0);
        let mut expansions = 0;
        while self.g_unchecked(hi) < y {
            hi *= 2.0;
            expansions += 1;
            if expansions >= G_INV_MAX_ITER {
                return Err(WeightError::InverseBracket { y });
            }
        }
        for _ in 0..G_INV_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            let gm = self.g_unchecked(mid);
            if (gm - y).abs() <= G_INV_TOL * (1.0 + y) {
                return Ok(mid);
            }
            if gm < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `v(x) = u(g^{-1}(x))`, positive and non-increasing.
    pub fn eval_v(&self, x: f64) -> Result<f64, WeightError> {
        Ok(self.u_unchecked(self.eval_g_inv(x)?))
    }

    /// `psi(x) = x v(x)`, increasing, bounded by `psi_inf`.
    pub fn eval_psi(&self, x: f64) -> Result<f64, WeightError> {
        Ok(x * self.eval_v(x)?)
    }

    /// `v` and `psi` at once; the solvers evaluate both per atom per sweep.
    pub(crate) fn v_psi(&self, x: f64) -> Result<(f64, f64), WeightError> {
        let v = self.eval_v(x)?;
        Ok((v, x * v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn family() -> WeightFamily {
        WeightFamily::shifted_inverse(0.5, 1.0 / 3.0).unwrap()
    }

    #[test]
    fn construction_validates_existence_margin() {
        // c * phi_inf = 0.5 * 3.0 >= 1 must be rejected outright.
        let err = WeightFamily::shifted_inverse(2.0, 0.5).unwrap_err();
        assert!(matches!(err, WeightError::ExistenceMargin(_)));
        assert!(WeightFamily::shifted_inverse(0.5, 0.5).is_ok());
        assert!(WeightFamily::shifted_inverse(-1.0, 0.3).is_err());
        assert!(WeightFamily::shifted_inverse(0.5, 1.0).is_err());
        assert!(WeightFamily::shifted_inverse(0.5, 0.0).is_err());
    }

    #[test]
    fn u_matches_formula() {
        let w = family();
        assert_relative_eq!(w.eval_u(0.0).unwrap(), 3.0);
        assert_relative_eq!(w.eval_u(1.0).unwrap(), 1.0);
        assert!(w.eval_u(1e6).unwrap() < 2e-6);
        assert!(w.eval_u(-0.1).is_err());
    }

    #[test]
    fn phi_matches_formula() {
        let w = family();
        assert_relative_eq!(w.eval_phi(0.0).unwrap(), 0.0);
        assert_relative_eq!(w.eval_phi(1.0).unwrap(), 1.0);
        // Hand evaluation 0.5 * 1.5 / 1.0, cross-checked against x * u(x).
        assert_relative_eq!(w.eval_phi(0.5).unwrap(), 0.75);
        assert_relative_eq!(
            w.eval_phi(0.5).unwrap(),
            0.5 * w.eval_u(0.5).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(w.phi_inf(), 1.5);
        assert!(w.eval_phi(-1.0).is_err());
    }

    #[test]
    fn g_matches_hand_values() {
        let w = family();
        assert_relative_eq!(w.eval_g(0.0).unwrap(), 0.0);
        assert_relative_eq!(w.eval_g(1.0).unwrap(), 1.5);
        // phi(2) = 2 * 1.5 / 2.5 = 1.2, so g(2) = 2 / (1 - 0.4).
        assert_relative_eq!(w.eval_g(2.0).unwrap(), 2.0 / 0.6, epsilon = 1e-14);
    }

    #[test]
    fn g_inv_inverts_g() {
        let w = family();
        assert_relative_eq!(w.eval_g_inv(0.0).unwrap(), 0.0);
        assert_relative_eq!(w.eval_g_inv(1.5).unwrap(), 1.0, epsilon = 1e-12);
        for y in [0.1, 1.0, 10.0, 100.0] {
            let x = w.eval_g_inv(y).unwrap();
            assert_relative_eq!(w.eval_g(x).unwrap(), y, epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_form_inverse_agrees_with_bisection() {
        for (alpha, c) in [(0.5, 0.25), (0.5, 1.0 / 3.0), (0.5, 0.5), (2.0, 0.2)] {
            let w = WeightFamily::shifted_inverse(alpha, c).unwrap();
            let mut y = 1e-4;
            while y < 1e5 {
                let fast = w.eval_g_inv(y).unwrap();
                let slow = w.eval_g_inv_bisection(y).unwrap();
                assert!(
                    (fast - slow).abs() <= 1e-9 * (1.0 + slow),
                    "alpha={alpha} c={c} y={y}: {fast} vs {slow}"
                );
                y *= 3.7;
            }
        }
    }

    #[test]
    fn v_matches_derivation() {
        let w = family();
        assert_relative_eq!(w.eval_v(0.0).unwrap(), 3.0);
        assert_relative_eq!(w.eval_v(1.5).unwrap(), 1.0, epsilon = 1e-12);
        let a = w.eval_v(0.5).unwrap();
        let b = w.eval_v(1.5).unwrap();
        let c = w.eval_v(5.0).unwrap();
        assert!(a >= b && b >= c);
    }

    #[test]
    fn psi_matches_derivation() {
        let w = family();
        assert_relative_eq!(w.eval_psi(0.0).unwrap(), 0.0);
        assert_relative_eq!(w.eval_psi(1.5).unwrap(), 1.5, epsilon = 1e-12);
        // psi_inf = 1.5 / (1 - 0.5) from the table of derived constants.
        assert_relative_eq!(w.psi_inf(), 3.0);
        let tail = w.eval_psi(1e6).unwrap();
        assert!((tail - 3.0).abs() < 0.01 * 3.0, "psi(1e6) = {tail}");
    }

    #[test]
    fn phi_is_lipschitz_with_constant_u0() {
        let w = family();
        let u0 = w.eval_u(0.0).unwrap();
        let grid: Vec<f64> = (0..400).map(|i| i as f64 * 2.5).collect();
        for &x in &grid {
            for &y in &grid {
                let lhs = (w.eval_phi(x).unwrap() - w.eval_phi(y).unwrap()).abs();
                assert!(lhs <= u0 * (x - y).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn phi_linear_bounds() {
        let w = family();
        let u0 = w.eval_u(0.0).unwrap();
        for m in [0.1, 1.0, 10.0] {
            let um = w.eval_u(m).unwrap();
            for i in 0..=200 {
                let x = m * i as f64 / 200.0;
                let phi = w.eval_phi(x).unwrap();
                assert!(phi <= u0 * x + 1e-15);
                assert!(phi >= um * x - 1e-15);
            }
        }
        // The upper bound holds on all of [0, inf), not just [0, m].
        for x in [20.0, 1e3, 1e6] {
            assert!(w.eval_phi(x).unwrap() <= u0 * x);
        }
    }

    #[test]
    fn g_inv_is_one_lipschitz() {
        let w = family();
        let grid: Vec<f64> = (0..200).map(|i| 1e-3 * 1.1f64.powi(i)).collect();
        for i in 0..grid.len() {
            for j in 0..=i {
                let (y, z) = (grid[i], grid[j]);
                let gy = w.eval_g_inv(y).unwrap();
                let gz = w.eval_g_inv(z).unwrap();
                let diff = gy - gz;
                assert!(diff >= -1e-12);
                let slope = 1.0 - w.c() * w.eval_phi(gy).unwrap();
                assert!(diff <= (y - z) * slope + 1e-10);
                assert!(diff <= (y - z) + 1e-10);
            }
        }
    }

    #[test]
    fn psi_identity_on_log_grid() {
        // |psi/(1 + c psi) - phi(g^-1)| must vanish to within 1e-10; this is
        // the identity the acceptance suite sweeps over several aspect
        // ratios.
        let w = family();
        for i in 0..=200 {
            let x = 1e-3 * 10f64.powf(7.0 * i as f64 / 200.0);
            let psi = w.eval_psi(x).unwrap();
            let lhs = psi / (1.0 + w.c() * psi);
            let rhs = w.eval_phi(w.eval_g_inv(x).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10, "x={x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn psi_shares_phi_properties() {
        let w = family();
        let v0 = w.eval_v(0.0).unwrap();
        let mut prev = -1.0;
        for m in [0.1, 1.0, 10.0] {
            let vm = w.eval_v(m).unwrap();
            for i in 0..=100 {
                let x = m * i as f64 / 100.0;
                let psi = w.eval_psi(x).unwrap();
                assert!(psi <= v0 * x + 1e-15);
                assert!(psi >= vm * x - 1e-15);
            }
        }
        for i in 0..=300 {
            let x = i as f64 * 0.37;
            let psi = w.eval_psi(x).unwrap();
            assert!(psi >= prev);
            prev = psi;
        }
    }
}
