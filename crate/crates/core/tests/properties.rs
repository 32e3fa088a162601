use std::f64::consts::TAU;

use conformal_flow::affine_bridge::{self, Sl2Params};
use conformal_flow::circle_field::{trig_polynomial, CircleField, FieldSnapshot};
use conformal_flow::conformal_metric::{covariance_residual, ConformalMetric, MetricSnapshot};
use conformal_flow::diagnostics;
use conformal_flow::flow_engine::{self, FlowState, StepperConfig};
use proptest::prelude::*;

/// Coefficients of a positive trig polynomial `1 + Σ (a_k cos kθ + b_k sin kθ)`.
fn coeffs(modes: usize, amplitude: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0..1.0f64, modes),
        prop::collection::vec(-1.0..1.0f64, modes),
    )
        .prop_map(move |(a, b)| {
            let scale = amplitude / modes as f64;
            let mut cos = vec![1.0];
            cos.extend(a.iter().map(|x| x * scale));
            (cos, b.iter().map(|x| x * scale).collect())
        })
}

fn positive_field(n: usize, modes: usize, amplitude: f64) -> impl Strategy<Value = CircleField> {
    coeffs(modes, amplitude).prop_map(move |(a, b)| trig_polynomial(n, &a, &b).unwrap())
}

/// u with mode 1 of u⁻³ removed, so the curve closes.
fn closed_factor(n: usize) -> impl Strategy<Value = CircleField> {
    coeffs(4, 0.4).prop_map(move |(mut a, mut b)| {
        a[1] = 0.0;
        b[0] = 0.0;
        trig_polynomial(n, &a, &b).unwrap().map(|w| w.powf(-1.0 / 3.0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_derivative_is_exact_on_trig_polynomials((a, b) in coeffs(6, 0.9)) {
        let f = trig_polynomial(32, &a, &b).unwrap();
        let d = f.derivative(1).unwrap();
        for (j, &x) in d.samples().iter().enumerate() {
            let t = f.theta(j);
            let exact: f64 = (1..a.len())
                .map(|k| k as f64 * (b[k - 1] * (k as f64 * t).cos() - a[k] * (k as f64 * t).sin()))
                .sum();
            prop_assert!((x - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn resampling_preserves_band_limited_fields(f in positive_field(32, 6, 0.9)) {
        let up = f.resample(96).unwrap();
        let back = up.resample(32).unwrap();
        prop_assert!(back.sup_distance(&f) < 1e-13);
        prop_assert!((up.integrate() - f.integrate()).abs() < 1e-12);
    }

    #[test]
    fn snapshots_round_trip_bit_exactly(f in positive_field(16, 4, 0.5)) {
        let json = serde_json::to_string(&f.to_snapshot()).unwrap();
        let back = CircleField::from_snapshot(serde_json::from_str::<FieldSnapshot>(&json).unwrap()).unwrap();
        prop_assert_eq!(back.samples(), f.samples());
        let m = ConformalMetric::new(4.0, f).unwrap();
        let json = serde_json::to_string(&m.to_snapshot()).unwrap();
        let back = ConformalMetric::from_snapshot(serde_json::from_str::<MetricSnapshot>(&json).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn curvature_operator_is_conformally_covariant(
        u in positive_field(64, 4, 0.5),
        phi in positive_field(64, 4, 0.5),
        psi in positive_field(64, 4, 2.0),
        affine in any::<bool>(),
    ) {
        let m = ConformalMetric::new(if affine { 1.0 } else { 4.0 }, u).unwrap();
        prop_assert!(covariance_residual(&m, &phi, &psi).unwrap() < 1e-9);
    }

    #[test]
    fn one_normalized_step_keeps_length_and_raises_mean_curvature(
        u in positive_field(32, 4, 0.4),
    ) {
        let m = flow_engine::project_length(&ConformalMetric::new(4.0, u).unwrap());
        prop_assert!((m.arc_length() - TAU).abs() < 1e-12);
        let s = FlowState::new(m);
        let next = flow_engine::step_normalized(&s, &StepperConfig::default()).unwrap();
        prop_assert!(next.mean_curvature() >= s.mean_curvature() - 1e-12);
        prop_assert!((next.metric().arc_length() - TAU).abs() < 1e-9);
        prop_assert!(next.mean_curvature() <= 1.0 + 1e-9);
    }

    #[test]
    fn sharp_inequalities_hold(u in positive_field(64, 5, 0.6), w in closed_factor(64)) {
        prop_assert!(diagnostics::theorem_b_report(&u).unwrap().deficit >= -1e-9);
        prop_assert!(diagnostics::theorem_a_report(&w).unwrap().deficit >= -1e-9);
    }

    #[test]
    fn closed_factors_reconstruct_closed_curves(w in closed_factor(64)) {
        let m = ConformalMetric::new(1.0, w).unwrap();
        let curve = affine_bridge::reconstruct_curve(&m).unwrap();
        prop_assert!(curve.closure_defect < 1e-10);
        prop_assert!(curve.area > 0.0);
        prop_assert!((curve.perimeter - m.inverse_cube().integrate()).abs() < 1e-10);
    }

    #[test]
    fn stretches_preserve_area_and_affine_length(
        w in closed_factor(128),
        log_lambda in -0.6..0.6f64,
        angle in 0.0..std::f64::consts::PI,
    ) {
        let m = ConformalMetric::new(1.0, w).unwrap();
        let p = Sl2Params::new(log_lambda.exp(), angle).unwrap();
        let v = affine_bridge::sl2_transform(&m, p).unwrap();
        let area = |m: &ConformalMetric| affine_bridge::euclidean_area(m).unwrap();
        prop_assert!((area(&v) - area(&m)).abs() < 1e-9);
        prop_assert!((v.arc_length() - m.arc_length()).abs() < 1e-9);
        let back = affine_bridge::sl2_transform(&v, p.inverse()).unwrap();
        prop_assert!(back.u().sup_distance(m.u()) < 1e-8);
    }

    #[test]
    fn normalization_never_lengthens_the_curve(w in closed_factor(128)) {
        let m = ConformalMetric::new(1.0, w).unwrap();
        let (v, _) = affine_bridge::sl2_normalize(&m).unwrap();
        prop_assert!(affine_bridge::perimeter(&v) <= affine_bridge::perimeter(&m) + 1e-10);
        let (c, s) = affine_bridge::critical_integrals(&v);
        prop_assert!(c.abs().max(s.abs()) < 1e-8);
        prop_assert!(affine_bridge::perimeter_bound_report(&v).unwrap().deficit >= -1e-8);
    }
}
