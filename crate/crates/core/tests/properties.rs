//! Property tests over randomized parameters.

use proptest::prelude::*;
use robust_scatter::harness::pairwise_sum;
use robust_scatter::measures::DiscreteMeasure;
use robust_scatter::weights::WeightFamily;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// g and its inverse stay mutually consistent across the family's
    /// admissible parameter range.
    #[test]
    fn g_round_trip(
        alpha in 0.05f64..4.0,
        c_frac in 0.05f64..0.95,
        y in 0.0f64..1e4,
    ) {
        // Keep c inside the existence margin c * (1 + alpha) < 1.
        let c = c_frac / (1.0 + alpha);
        let w = WeightFamily::shifted_inverse(alpha, c).unwrap();
        let x = w.eval_g_inv(y).unwrap();
        prop_assert!(x >= 0.0);
        let back = w.eval_g(x).unwrap();
        prop_assert!((back - y).abs() <= 1e-9 * (1.0 + y));
        // The closed form agrees with the generic bisection path.
        let slow = w.eval_g_inv_bisection(y).unwrap();
        prop_assert!((x - slow).abs() <= 1e-8 * (1.0 + slow));
    }

    /// phi and psi are monotone with their stated linear envelopes.
    #[test]
    fn derived_functions_monotone(
        alpha in 0.05f64..4.0,
        c_frac in 0.05f64..0.95,
        x in 0.0f64..1e3,
        dx in 0.0f64..10.0,
    ) {
        let c = c_frac / (1.0 + alpha);
        let w = WeightFamily::shifted_inverse(alpha, c).unwrap();
        prop_assert!(w.eval_phi(x + dx).unwrap() >= w.eval_phi(x).unwrap() - 1e-12);
        prop_assert!(w.eval_psi(x + dx).unwrap() >= w.eval_psi(x).unwrap() - 1e-12);
        prop_assert!(w.eval_v(x + dx).unwrap() <= w.eval_v(x).unwrap() + 1e-12);
        prop_assert!(w.eval_phi(x).unwrap() <= w.eval_u(0.0).unwrap() * x + 1e-12);
        prop_assert!(w.eval_psi(x).unwrap() <= w.psi_inf() + 1e-9);
    }

    /// Measures survive a JSON round trip bit for bit.
    #[test]
    fn measure_json_round_trip(
        atoms in prop::collection::vec(0.0f64..100.0, 1..8),
        raw_weights in prop::collection::vec(0.01f64..1.0, 1..8),
    ) {
        let k = atoms.len().min(raw_weights.len());
        let atoms = atoms[..k].to_vec();
        let total: f64 = raw_weights[..k].iter().sum();
        let weights: Vec<f64> = raw_weights[..k].iter().map(|w| w / total).collect();
        // Normalization can miss the mass tolerance by rounding; skip those.
        if let Ok(mu) = DiscreteMeasure::new(atoms, weights) {
            let json = serde_json::to_string(&mu).unwrap();
            let back: DiscreteMeasure = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, mu);
        }
    }

    /// Pairwise summation agrees with the naive sum.
    #[test]
    fn pairwise_sum_is_a_sum(xs in prop::collection::vec(-1e6f64..1e6, 0..300)) {
        let naive: f64 = xs.iter().sum();
        let scale = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-10 * scale);
    }
}
