use kgl_core::error::KglError;
use kgl_core::quadrature::{integrate_adaptive, QuadSettings};
use kgl_core::sharpness::{
    budget_composite, budget_limit, gradient_blowup, radial_budget, trace_blowup, extrapolate_limit,
    linear_fit, log_sweep, matching_radius, sup_grad, RadialProfile,
};
use proptest::prelude::*;

/// Plain `dρ` quadrature of the budget, split at `δ`, as an oracle for the
/// log-variable integration.
fn direct_budget(p: &RadialProfile) -> f64 {
    let n = p.n;
    let c = std::f64::consts::PI.powi(n as i32) / (1..n).map(|k| k as f64).product::<f64>();
    let f = |rho: f64| p.budget_density(rho) * rho.powi(n as i32 - 1);
    let z2 = p.zeta * p.zeta;
    let settings = QuadSettings {
        max_panels: 20_000,
        ..Default::default()
    };
    let (v, _) = integrate_adaptive(f, 0.0, z2, &[p.delta, 10.0 * p.delta], &settings).unwrap();
    c * v
}

#[test]
fn log_variable_matches_direct_quadrature() {
    for (a, p, d) in [(0.4, 1.5, 1e-3), (0.9, 3.0, 1e-4), (0.4, 1.5, 1e-2)] {
        let prof = RadialProfile::new(a, d, 2, p).unwrap();
        let x = radial_budget(&prof).unwrap();
        let y = direct_budget(&prof);
        assert!((x / y - 1.0).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn power_counting_exponents() {
    // -p + 2an - 2n plus the radial weight 2n - 1 stays above -1 iff p < 2an
    for (a, n, p) in [(0.4, 2.0, 1.5), (0.9, 2.0, 3.0)] {
        let exponent: f64 = -p + 2.0 * a * n - 2.0 * n + 2.0 * n - 1.0;
        assert!(exponent > -1.0);
    }
    assert!((0.9f64 * 2.0 * 2.0 - 3.0 - 1.0 + 0.4).abs() < 1e-12);
}

#[test]
fn gradient_blowup_slope() {
    let prof = RadialProfile::new(0.4, 0.0, 2, 1.5).unwrap();
    let deltas = log_sweep(1e-2, 1e-6, 9);
    let s = gradient_blowup(&prof, &deltas).unwrap();
    assert!((s.fit.slope + 0.1).abs() <= 0.01, "{:?}", s.fit);
    assert!(s.fit.r_squared >= 0.99);
    // evaluation at ρ = δ stays within a factor 2 of the supremum
    for row in &s.rows {
        let ratio = row.sup_grad / row.grad_at_delta;
        assert!((1.0..=2.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn boundary_exponent_has_no_blowup() {
    let prof = RadialProfile::new(0.5, 0.0, 2, 1.5).unwrap();
    let s = gradient_blowup(&prof, &log_sweep(1e-2, 1e-6, 9)).unwrap();
    assert!(s.fit.slope.abs() < 0.01, "{:?}", s.fit);
}

#[test]
fn trace_blowup_slope_and_bounded_budget() {
    let prof = RadialProfile::new(0.9, 0.0, 2, 3.0).unwrap();
    let deltas = log_sweep(1e-2, 1e-6, 9);
    let s = trace_blowup(&prof, &deltas).unwrap();
    assert!((s.fit.slope + 0.1).abs() <= 0.01);
    assert!(s.fit.r_squared >= 0.99);
    let limit = s.budget_limit.unwrap();
    assert!(s.rows.iter().all(|r| r.i_p.is_finite() && r.i_p <= limit));
}

#[test]
fn smooth_limit_trace_is_constant() {
    let prof = RadialProfile {
        a: 1.0,
        delta: 0.0,
        n: 2,
        zeta: 0.3,
        p: 3.0,
    };
    for d in [1e-2, 1e-4, 1e-6] {
        let p = prof.with_delta(d);
        assert!((p.trace_hessian(d) - 2.0).abs() < 1e-14);
    }
}

#[test]
fn delta_zero_matches_extrapolation() {
    for (a, p) in [(0.4, 1.5), (0.9, 3.0)] {
        let prof = RadialProfile::new(a, 0.0, 2, p).unwrap();
        let direct = radial_budget(&prof).unwrap();
        let deltas = log_sweep(1e-6, 1e-12, 7);
        let values: Vec<f64> = deltas.iter().map(|&d| radial_budget(&prof.with_delta(d)).unwrap()).collect();
        let extrapolated = extrapolate_limit(&deltas, &values, prof.integrability_margin() / 2.0);
        assert!((extrapolated / direct - 1.0).abs() < 0.02, "{extrapolated} vs {direct}");
    }
}

#[test]
fn halving_the_step_is_stable() {
    let prof = RadialProfile::new(0.4, 0.0, 2, 1.5).unwrap();
    for d in [1e-2, 1e-4, 1e-6] {
        let p = prof.with_delta(d);
        let (a, b) = (budget_composite(&p, 200), budget_composite(&p, 400));
        assert!((a / b - 1.0).abs() < 5e-3);
    }
}

#[test]
fn threshold_dichotomy() {
    for a in [0.4, 0.9] {
        let threshold = 2.0 * a * 2.0;
        let deltas = [1e-4, 1e-6, 1e-8, 1e-10];
        let below = RadialProfile::new(a, 0.0, 2, threshold - 0.1).unwrap();
        let limit = budget_limit(&below).unwrap();
        for &d in &deltas {
            assert!(radial_budget(&below.with_delta(d)).unwrap() <= limit);
        }
        let above = RadialProfile::new(a, 0.0, 2, threshold + 0.1).unwrap();
        assert!(budget_limit(&above).is_err());
        assert!(matches!(radial_budget(&above), Err(KglError::QuadratureFailure { .. })));
        let values: Vec<f64> = deltas.iter().map(|&d| radial_budget(&above.with_delta(d)).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        // unbounded growth at the rate δ^{an - p/2}: affine in that power
        let x: Vec<f64> = deltas.iter().map(|d| d.powf(above.integrability_margin() / 2.0)).collect();
        let fit = linear_fit(&x, &values);
        assert!(fit.slope > 0.0 && fit.r_squared > 0.999, "a={a} {fit:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sup_gradient_dominates_samples(a in 0.05f64..0.95, d in 1e-7f64..1e-2, frac in 0.0f64..1.0) {
        let prof = RadialProfile::new(a, d, 2, 1.0).unwrap();
        let z2 = prof.zeta * prof.zeta;
        prop_assert!(sup_grad(&prof) >= prof.grad_phi(frac * z2) * (1.0 - 1e-12));
    }

    #[test]
    fn matching_radius_solves_crossing(a in 0.05f64..0.95) {
        let r = 2.0 * matching_radius(a).unwrap();
        let lhs = (r * r).powf(a);
        let rhs = 2.0 * (1.0 + r * r).ln();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }
}
