use proptest::prelude::*;

use regime_dual::config::presets;
use regime_dual::density::{SignalDensityPair, SignalFamily};
use regime_dual::filter::{filter_step, xi, EPS_CLAMP};
use regime_dual::market::{f_hat, theta_hat, UtilityParams};
use regime_dual::pide::{constant_discount_value, i_beta, PideConfig};
use regime_dual::strategy::{dual_value_of, primal_value_of, y_star_of};

fn gaussian_pair() -> impl Strategy<Value = SignalDensityPair> {
    (-2.0..2.0f64, 0.3..2.0f64, -2.0..2.0f64, 0.3..2.0f64, 0.1..5.0f64).prop_map(|(m1, v1, m2, v2, lam)| {
        SignalDensityPair::new(lam, SignalFamily::Gaussian { mean1: m1, var1: v1, mean2: m2, var2: v2 }).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn xi_stays_in_unit_interval_and_fixes_endpoints(pair in gaussian_pair(), x in 0.0..=1.0f64, z in -4.0..4.0f64) {
        let p = xi(x, z, &pair).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(xi(0.0, z, &pair).unwrap(), 0.0);
        prop_assert_eq!(xi(1.0, z, &pair).unwrap(), 1.0);
    }

    #[test]
    fn xi_is_increasing_in_the_prior(pair in gaussian_pair(), a in 0.01..0.98f64, z in -3.0..3.0f64) {
        let b = a + 0.01;
        prop_assert!(xi(b, z, &pair).unwrap() >= xi(a, z, &pair).unwrap());
    }

    #[test]
    fn theta_hat_and_f_hat_are_affine(pair in gaussian_pair(), x in 0.0..=1.0f64, y in 0.0..=1.0f64, w in 0.0..=1.0f64, z in -3.0..3.0f64) {
        let m = presets::gaussian_signals().market;
        let mix = w * x + (1.0 - w) * y;
        let lhs = theta_hat(mix, &m).unwrap();
        let rhs = w * theta_hat(x, &m).unwrap() + (1.0 - w) * theta_hat(y, &m).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let lhs = f_hat(mix, z, &pair).unwrap();
        let rhs = w * f_hat(x, z, &pair).unwrap() + (1.0 - w) * f_hat(y, z, &pair).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn filter_step_is_confined(x in 1e-6..(1.0 - 1e-6), dw in -1.0..1.0f64, dt in 1e-4..0.1f64) {
        let m = presets::gaussian_signals();
        let y = filter_step(x, dw, dt, &m).unwrap();
        prop_assert!(y >= EPS_CLAMP && y <= 1.0 - EPS_CLAMP);
    }

    #[test]
    fn i_beta_vanishes_on_flat_slices(pair in gaussian_pair(), c in 0.5..3.0f64) {
        let mut m = presets::gaussian_signals();
        m.signal = pair;
        let slice = vec![c; 51];
        let cfg = PideConfig::with_grid(50, 100);
        let out = i_beta(&slice, &m, &cfg).unwrap();
        prop_assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duality_identity_holds(v in 0.01..50.0f64, lam in 0.2..5.0f64, kappa in prop_oneof![-5.0..-0.05f64, 0.05..0.95f64]) {
        let u = UtilityParams::new(kappa).unwrap();
        let j = primal_value_of(v, lam, &u).unwrap();
        let y = y_star_of(v, lam, &u).unwrap();
        let d = dual_value_of(lam, y, &u).unwrap() + v * y;
        prop_assert!((j - d).abs() <= 1e-9 * j.abs());
        // The dual bound dominates the primal value everywhere.
        for f in [0.5, 0.9, 1.1, 2.0] {
            prop_assert!(dual_value_of(lam, f * y, &u).unwrap() + v * f * y >= j - 1e-9 * j.abs());
        }
    }

    #[test]
    fn constant_discount_value_is_monotone(d in -0.5..0.5f64, tau in 0.0..5.0f64) {
        let g = constant_discount_value(d, tau);
        prop_assert!(g >= constant_discount_value(d + 0.01, tau) - 1e-12);
        prop_assert!(g > 0.0);
    }
}
