use std::collections::BTreeMap;
use std::f64::consts::PI;

use kgl_core::error::KglError;
use kgl_core::field::{MetricField, ScalarField};
use kgl_core::functionals::{class_measures, ClassParams};
use kgl_core::geometry::BackgroundGeometry;
use kgl_core::green::{assemble_laplacian, sample_sources, solve_green, solve_greens, GreenField};
use kgl_core::linalg::KrylovStats;
use kgl_core::ma::{solve_ma, MAProblem};
use kgl_core::verify::*;
use kgl_core::{GridSpec, Herm};
use proptest::prelude::*;

fn wavy(grid: GridSpec, amp: f64) -> MetricField {
    MetricField::new(
        grid,
        (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                Herm::scalar(grid.n(), 1.0 + amp * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos())
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn lower_chain_on_flat_and_variable_metrics() {
    for metric in [MetricField::identity(GridSpec::new(1, 32).unwrap()), wavy(GridSpec::new(1, 32).unwrap(), 0.5)] {
        let op = assemble_laplacian(&metric).unwrap();
        for x in sample_sources(op.grid(), 4, 11, &[]) {
            let gf = solve_green(&op, x, 1e-12).unwrap();
            let r = check_lower_chain(&gf, &op);
            assert!(r.pass && r.margin >= -1e-9, "{r:?}");
            assert!(r.measured["ratio"] > 0.0);
        }
    }
}

#[test]
fn zero_green_passes_trivially() {
    let grid = GridSpec::new(1, 8).unwrap();
    let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
    let stats = KrylovStats {
        iterations: 0,
        residual: 0.0,
    };
    let gf = GreenField::from_values(&op, 0, ScalarField::zeros(grid), stats).unwrap();
    let r = check_lower_chain(&gf, &op);
    assert!(r.pass && r.value == 0.0 && r.bound == 0.0);
    // zero gradient: the weighted integral vanishes
    let g = check_gradient_identity(&gf, &op, 1.0, 0.05).unwrap();
    assert!(g.pass && g.value == 0.0);
}

#[test]
fn exponent_arithmetic() {
    let (q, s) = integrability_exponents(2, 0.1);
    assert!((q - 1.9).abs() < 1e-14);
    assert!((s - (4.0 / 3.0 - 0.1)).abs() < 1e-14);
    assert_eq!(integrability_exponents(1, 0.1).0, 3.0);
    assert!((conjugate_exponent(5.0) - 1.25).abs() < 1e-15);
    assert!(conjugate_exponent(5.0) < 4.0 / 3.0);
    assert!((degiorgi_exponent(2.0, 1).unwrap() - 0.5).abs() < 1e-15);
    assert!(degiorgi_exponent(1.0, 1).is_err());
}

fn flat_quantities(n: usize, m: usize) -> GreenQuantities {
    let grid = GridSpec::new(n, m).unwrap();
    let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
    let x = grid.index_of(&vec![m / 4; grid.dim()]);
    let greens = solve_greens(&op, &[x], 1e-11).unwrap();
    green_quantities(&greens, &op, 0.1)
}

#[test]
fn lq_integrals_are_grid_stable() {
    let (a, b) = (flat_quantities(1, 32), flat_quantities(1, 64));
    assert!((a.lq / b.lq - 1.0).abs() < 0.2);
    let (a, b) = (flat_quantities(2, 8), flat_quantities(2, 16));
    assert!((a.lq / b.lq - 1.0).abs() < 0.2, "{} {}", a.lq, b.lq);
    assert!((a.grad_ls / b.grad_ls - 1.0).abs() < 0.2, "{} {}", a.grad_ls, b.grad_ls);
}

#[test]
fn zero_f_sweep_over_t_is_uniform() {
    let grid = GridSpec::new(1, 16).unwrap();
    let params = ClassParams {
        p: 3.0,
        ..Default::default()
    };
    let mut members = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        let bg = BackgroundGeometry::with_diagonal_chi(grid, &[0.5], t).unwrap();
        let problem = MAProblem::normalized(bg.clone(), ScalarField::zeros(grid)).unwrap();
        let sol = solve_ma(&problem, 1e-12, 5).unwrap();
        let op = assemble_laplacian(&sol.metric).unwrap();
        let greens = solve_greens(&op, &sample_sources(&grid, 3, 1, &[]), 1e-12).unwrap();
        let mut coordinates = BTreeMap::new();
        coordinates.insert("t".to_owned(), t);
        members.push(SweepMember {
            coordinates,
            quantities: green_quantities(&greens, &op, 0.1),
            class: class_measures(problem.f(), &bg, &params).unwrap(),
        });
    }
    // the n = 1 Green function is invariant under constant rescaling
    let a = members[0].quantities.neg_inf;
    assert!(members.iter().all(|m| (m.quantities.neg_inf - a).abs() <= 1e-9));
    let reports = check_green_uniformity(&members, MetricClass::MPrime, UNIFORMITY_FACTOR).unwrap();
    assert!(reports.iter().all(|r| r.pass));
    members[1].class.in_m_prime = false;
    assert!(matches!(
        check_green_uniformity(&members, MetricClass::MPrime, UNIFORMITY_FACTOR),
        Err(KglError::ClassViolation(_))
    ));
}

#[test]
fn gradient_identity_flat() {
    let grid = GridSpec::new(1, 128).unwrap();
    let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
    let gf = solve_green(&op, grid.index_of(&[40, 64]), 1e-11).unwrap();
    for beta in [0.5, 1.0] {
        let r = check_gradient_identity(&gf, &op, beta, 0.05).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.measured["beta_times_value"] <= 1.05);
    }
}

#[test]
fn degiorgi_certificate_for_flat_green() {
    let grid = GridSpec::new(1, 32).unwrap();
    let bg = BackgroundGeometry::fixed_class(grid);
    let op = assemble_laplacian(&bg.omega_x_field()).unwrap();
    for x in sample_sources(&grid, 3, 5, &[]) {
        let gf = solve_green(&op, x, 1e-12).unwrap();
        let v = degiorgi_normalize(&gf.g, &op);
        let fit = check_degiorgi(&v, &ScalarField::zeros(grid), &bg, 2.0).unwrap();
        assert!(fit.pass() && fit.s_infinity.is_finite());
        assert!(fit.masses.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn degiorgi_nonpositive_v() {
    let grid = GridSpec::new(1, 8).unwrap();
    let bg = BackgroundGeometry::fixed_class(grid);
    let v = ScalarField::from_fn(grid, |x| -(2.0 * PI * x[0]).sin().powi(2));
    let fit = check_degiorgi(&v, &ScalarField::zeros(grid), &bg, 3.0).unwrap();
    assert_eq!(fit.c6, 0.0);
    assert!(fit.pass() && fit.s_infinity.is_finite());
}

#[test]
fn sobolev_morrey_constant_sample() {
    let grid = GridSpec::new(2, 8).unwrap();
    let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
    let greens = solve_greens(&op, &sample_sources(&grid, 2, 3, &[]), 1e-11).unwrap();
    let reports = check_sobolev_morrey(&greens, &op, &[ScalarField::constant(grid, 3.0)], 5.0).unwrap();
    assert!(reports[0].pass && reports[0].value == 0.0);
    assert!(check_sobolev_morrey(&greens, &op, &[], 4.0).is_err());
}

#[test]
fn curvature_floor_flat_boundary_case() {
    let grid = GridSpec::new(2, 8).unwrap();
    let bg = BackgroundGeometry::fixed_class(grid);
    let problem = MAProblem::normalized(bg, ScalarField::zeros(grid)).unwrap();
    let sol = solve_ma(&problem, 1e-12, 5).unwrap();
    let r = check_curvature_floor(&sol, problem.f(), 2).unwrap();
    assert!(r.pass);
    assert!((r.value - 1.0).abs() < 1e-12 && (r.bound - 1.0).abs() < 1e-12);
    for n in [1usize, 2] {
        let expected = 0.5f64.powi(n as i32) * (-0.7f64).exp();
        assert!((curvature_floor(n as f64, n, 0.7) - expected).abs() < 1e-15);
    }
}

#[test]
fn apriori_constant_and_drift() {
    let member = |budget: f64| AprioriMember {
        coordinates: BTreeMap::new(),
        budget,
        sup_h: 0.0,
        sup_q: 2.0,
        sup_s: 0.0,
    };
    let same: Vec<_> = (0..4).map(|_| member(0.0)).collect();
    let reports = check_apriori_sweeps(&same, UNIFORMITY_FACTOR).unwrap();
    assert!(reports.iter().all(|r| r.pass && r.value == 1.0));
    let drifting = vec![member(1.0), member(1.2)];
    assert!(matches!(
        check_apriori_sweeps(&drifting, UNIFORMITY_FACTOR),
        Err(KglError::BudgetDrift { .. })
    ));
}

#[test]
fn blowup_exponent_sign() {
    let d = [0.08, 0.04, 0.02, 0.01];
    let v: Vec<f64> = d.iter().map(|x: &f64| x.powf(-0.3)).collect();
    assert!((blowup_exponent(&d, &v) - 0.3).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s_infinity_nonincreasing_in_p(c6 in 0.0f64..50.0, p1 in 1.1f64..8.0, dp in 0.0f64..5.0, n in 1usize..3) {
        let p1 = p1 + n as f64 - 1.0;
        let d1 = degiorgi_exponent(p1, n).unwrap();
        let d2 = degiorgi_exponent(p1 + dp, n).unwrap();
        prop_assert!(d2 >= d1);
        let (_, s1) = degiorgi_bound(c6, d1, 8.0);
        let (_, s2) = degiorgi_bound(c6, d2, 8.0);
        prop_assert!(s2 <= s1 * (1.0 + 1e-12));
    }

    #[test]
    fn uniformity_ratio_scale_invariant(v in prop::collection::vec(0.1f64..10.0, 1..8), k in 0.1f64..10.0) {
        let scaled: Vec<f64> = v.iter().map(|x| k * x).collect();
        let (a, b) = (uniformity_ratio(&v), uniformity_ratio(&scaled));
        prop_assert!((a - b).abs() <= 1e-12 * a);
        prop_assert!(a >= 1.0);
    }
}
