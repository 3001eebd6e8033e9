mod common;

use ergodic_core::perron::lambda_p;
use ergodic_core::simplex::{field_b, from_chart, to_chart};
use ergodic_core::ModelParams;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_is_tangent(y1 in 0.0..1.0f64, frac in 0.0..1.0f64, alpha in 0.0..20.0f64) {
        let p = ModelParams::reference();
        let y = from_chart(&p, [y1, frac * (1.0 - y1) / 2.0]);
        prop_assert!(p.m().dot(&field_b(&p, &y, alpha)).abs() <= 1e-12);
    }

    #[test]
    fn chart_round_trip(y1 in 0.0..1.0f64, frac in 0.0..1.0f64) {
        let p = ModelParams::reference();
        let c = [y1, frac * (1.0 - y1) / 2.0];
        let y = from_chart(&p, c);
        prop_assert!((p.m().dot(&y) - 1.0).abs() <= 1e-14);
        let back = to_chart(&y);
        prop_assert!((back[0] - c[0]).abs() <= 1e-15 && (back[1] - c[1]).abs() <= 1e-15);
    }

    #[test]
    fn perron_matches_schur(tau1 in 0.1..3.0f64, tau2 in 0.1..10.0f64, alpha in 0.01..50.0f64) {
        let p = ModelParams::running_example(common::rates(tau1, tau2)).unwrap();
        let v = lambda_p(&p, alpha).unwrap();
        prop_assert!((v - common::perron(&p, alpha)).abs() <= 1e-9 * (1.0 + v.abs()));
    }
}
