//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL` line with the measured numbers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use kgl_core::family::{generate_family, BudgetTarget, FamilyKind, FamilySpec, FamilyMember};
use kgl_core::field::{MetricField, ScalarField};
use kgl_core::functionals::{class_measures, functional_report, ClassParams};
use kgl_core::geometry::{ma_determinant_ratio, BackgroundGeometry};
use kgl_core::green::{assemble_laplacian, sample_sources, solve_green, solve_greens, GreenField, LaplacianOperator};
use kgl_core::ma::{manufactured_problem, solve_ma, MAProblem, MASolution, PeriodicBump};
use kgl_core::sharpness::{gradient_blowup, trace_blowup, log_sweep, RadialProfile};
use kgl_core::verify::*;
use kgl_core::GridSpec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

const GREEN_TOL: f64 = 1e-10;

fn verdict(criterion: u32, ok: bool, detail: String) {
    println!("criterion {criterion}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn band_limited_member(n: usize, m: usize, seed: u64, amplitude: f64, t: f64) -> FamilyMember {
    let grid = GridSpec::new(n, m).unwrap();
    let spec = FamilySpec {
        kind: FamilyKind::BandLimited { modes: 2 },
        amplitude,
        seed,
        t_values: vec![t],
        chi_eigenvalues: vec![if n == 1 { vec![0.5] } else { vec![0.5, 0.3] }],
        deltas: vec![],
        hold_budget: None,
    };
    generate_family(grid, &spec, &ClassParams::default()).unwrap().remove(0)
}

fn solved(n: usize, m: usize, seed: u64, t: f64) -> (MAProblem, MASolution) {
    let member = band_limited_member(n, m, seed, 0.3, t);
    let sol = solve_ma(&member.problem, 1e-10, 50).unwrap();
    (member.problem, sol)
}

/// In-place 2-D DFT of an `m × m` row-major array.
fn fft2(data: &mut [Complex64], m: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    for row in data.chunks_mut(m) {
        plan.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = data[i * m + j];
        }
        plan.process(&mut col);
        for i in 0..m {
            data[i * m + j] = col[i];
        }
    }
}

/// Solves `symbol(k) û = r̂` on the `n = 1` lattice with the zero mode removed.
fn spectral_solve(m: usize, rhs: &[f64], symbol: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut data: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut data, m, false);
    for k1 in 0..m {
        for k2 in 0..m {
            let s1 = (PI * k1 as f64 / m as f64).sin();
            let s2 = (PI * k2 as f64 / m as f64).sin();
            let c = &mut data[k1 * m + k2];
            *c = if k1 == 0 && k2 == 0 { Complex64::new(0.0, 0.0) } else { *c / symbol(s1 * s1, s2 * s2) };
        }
    }
    fft2(&mut data, m, true);
    data.iter().map(|c| c.re / (m * m) as f64).collect()
}

fn fft_lattice_green(m: usize, source: usize) -> Vec<f64> {
    let mut e = vec![0.0; m * m];
    e[source] = 1.0;
    spectral_solve(m, &e, |a, b| 2.0 * (a + b))
}

#[test]
fn criterion_01_green_kernel_exactness() {
    let start = Instant::now();
    let grid = GridSpec::new(1, 64).unwrap();
    let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
    let sources = sample_sources(&grid, 4, 2024, &[grid.index_of(&[0, 0])]);
    let greens = solve_greens(&op, &sources, 1e-12).unwrap();
    let mut dev: f64 = 0.0;
    let mut mean: f64 = 0.0;
    for gf in &greens {
        let oracle = fft_lattice_green(64, gf.source);
        dev = gf.g.values().iter().zip(&oracle).fold(dev, |e, (a, b)| e.max((a - b).abs()));
        mean = mean.max(green_mean(gf, &op).abs());
    }
    let mut sym: f64 = 0.0;
    for a in &greens {
        for b in &greens {
            sym = sym.max((a.g.values()[b.source] - b.g.values()[a.source]).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = dev <= 1e-8 && sym <= 1e-8 && mean <= 1e-9 * op.volume() && elapsed < Duration::from_secs(10);
    verdict(1, ok, format!("oracle deviation {dev:.2e}, symmetry {sym:.2e}, mean {mean:.2e}, {elapsed:.2?}"));
}

/// Greens of several suites: flat and solved metrics in both dimensions.
fn green_suites() -> Vec<(String, LaplacianOperator, Vec<GreenField>, ScalarField, BackgroundGeometry)> {
    let mut out = Vec::new();
    let flat = GridSpec::new(1, 64).unwrap();
    let bg = BackgroundGeometry::fixed_class(flat);
    let op = assemble_laplacian(&bg.omega_x_field()).unwrap();
    let greens = solve_greens(&op, &sample_sources(&flat, 4, 1, &[]), GREEN_TOL).unwrap();
    out.push(("flat n=1".to_owned(), op, greens, ScalarField::zeros(flat), bg));
    for (n, m, t) in [(1, 64, 0.5), (2, 16, 1.0), (2, 16, 0.03)] {
        let (problem, sol) = solved(n, m, 3, t);
        let op = assemble_laplacian(&sol.metric).unwrap();
        let greens = solve_greens(&op, &sample_sources(op.grid(), 4, 1, &[]), GREEN_TOL).unwrap();
        let f = ma_determinant_ratio(&sol.metric, problem.background()).unwrap();
        out.push((format!("solved n={n} t={t}"), op, greens, f, problem.background().clone()));
    }
    out
}

#[test]
fn criterion_02_lower_chain() {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (_, op, greens, _, _) in green_suites() {
        for gf in &greens {
            worst = worst.min(check_lower_chain(gf, &op).margin);
            count += 1;
        }
    }
    verdict(2, worst >= -1e-9, format!("{count} Greens, smallest margin {worst:.3e}"));
}

#[test]
fn criterion_03_representation_identity() {
    let start = Instant::now();
    let (_, sol) = solved(2, 16, 5, 0.5);
    let op = assemble_laplacian(&sol.metric).unwrap();
    let greens = solve_greens(&op, &sample_sources(op.grid(), 8, 77, &[]), GREEN_TOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = ScalarField::from_fn(*op.grid(), |x| {
            (0..4)
                .map(|a| c[a] * (2.0 * PI * x[a]).sin() + c[a + 4] * (2.0 * PI * (x[a] + x[(a + 1) % 4])).cos())
                .sum()
        });
        let r = check_representation(&op, &greens, &u, GREEN_TOL, 10.0);
        worst = worst.max(r.value / r.bound);
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1.0 && elapsed < Duration::from_secs(300);
    verdict(3, ok, format!("worst residual / (10 tol osc u) = {worst:.3e}, {elapsed:.2?}"));
}

fn identity_values(op: &LaplacianOperator, x: usize) -> [f64; 2] {
    let gf = solve_green(op, x, GREEN_TOL).unwrap();
    [0.5, 1.0].map(|beta| beta * gradient_identity_value(&gf, op, beta).unwrap())
}

#[test]
fn criterion_04_gradient_identity() {
    let mut ok = true;
    let mut detail = Vec::new();
    // flat and solved n = 1 at m and 2m, same physical source
    for solved_metric in [false, true] {
        let mut excess = Vec::new();
        for m in [128, 256] {
            let grid = GridSpec::new(1, m).unwrap();
            let metric = if solved_metric {
                let bg = BackgroundGeometry::with_diagonal_chi(grid, &[0.5], 0.5).unwrap();
                let f = ScalarField::from_fn(grid, |x| 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
                solve_ma(&MAProblem::normalized(bg, f).unwrap(), 1e-10, 5).unwrap().metric
            } else {
                MetricField::identity(grid)
            };
            let op = assemble_laplacian(&metric).unwrap();
            let v = identity_values(&op, grid.index_of(&[m / 4, m / 2]));
            ok &= v.iter().all(|&x| x <= 1.05);
            excess.push(v.map(|x| (x - 1.0).max(0.0)));
            detail.push(format!("{}m={m}: {:.4}/{:.4}", if solved_metric { "solved " } else { "flat " }, v[0], v[1]));
        }
        ok &= (0..2).all(|k| excess[1][k] <= excess[0][k]);
    }
    let (_, sol) = solved(2, 16, 3, 0.5);
    let op = assemble_laplacian(&sol.metric).unwrap();
    let v = identity_values(&op, 123);
    ok &= v.iter().all(|&x| x <= 1.05);
    detail.push(format!("solved n=2 m=16: {:.4}/{:.4}", v[0], v[1]));
    verdict(4, ok, format!("β·value for β = 0.5/1: {}", detail.join(", ")));
}

#[test]
fn criterion_05_green_uniformity() {
    let start = Instant::now();
    let params = ClassParams::default();
    let grid = GridSpec::new(2, 16).unwrap();
    let spec = FamilySpec {
        kind: FamilyKind::BandLimited { modes: 2 },
        amplitude: 0.3,
        seed: 7,
        t_values: vec![1.0, 0.3, 0.1, 0.03],
        chi_eigenvalues: vec![vec![0.5, 0.3]],
        deltas: vec![],
        hold_budget: None,
    };
    let family = generate_family(grid, &spec, &params).unwrap();
    let sources = sample_sources(&grid, 8, 99, &[]);
    let mut members = Vec::new();
    let mut previous: Option<ScalarField> = None;
    for m in &family {
        let sol = kgl_core::ma::solve_ma_with(
            &m.problem,
            &kgl_core::ma::SolverSettings::default(),
            previous.as_ref(),
        )
        .unwrap();
        let op = assemble_laplacian(&sol.metric).unwrap();
        let greens = solve_greens(&op, &sources, GREEN_TOL).unwrap();
        let f = ma_determinant_ratio(&sol.metric, m.problem.background()).unwrap();
        members.push(SweepMember {
            coordinates: m.coordinates.clone(),
            quantities: green_quantities(&greens, &op, 0.1),
            class: class_measures(&f, m.problem.background(), &params).unwrap(),
        });
        previous = Some(sol.phi);
    }
    let reports = check_green_uniformity(&members, MetricClass::MPrime, UNIFORMITY_FACTOR).unwrap();
    let elapsed = start.elapsed();
    let ok = reports.iter().all(|r| r.pass) && elapsed < Duration::from_secs(1800);
    let ratios: Vec<String> = reports.iter().map(|r| format!("{} {:.3}", r.name, r.value)).collect();
    verdict(5, ok, format!("max/median: {}, {elapsed:.2?}", ratios.join(", ")));
}

#[test]
fn criterion_06_degiorgi_certificate() {
    let spot = degiorgi_exponent(2.0, 1).unwrap();
    let mut ok = (spot - 0.5).abs() < 1e-15;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (_, op, greens, f, bg) in green_suites() {
        let p = 2.0 * bg.n() as f64 + 1.0;
        for gf in &greens {
            let v = degiorgi_normalize(&gf.g, &op);
            let fit = check_degiorgi(&v, &f, &bg, p).unwrap();
            ok &= fit.pass() && fit.s_infinity.is_finite();
            worst = worst.min(fit.s_infinity - fit.sup_v);
            count += 1;
        }
    }
    verdict(6, ok, format!("δ₀(p=2, n=1) = {spot}, {count} certificates, smallest S_∞ - sup v = {worst:.3}"));
}

#[test]
fn criterion_07_sharpness_gradient() {
    let start = Instant::now();
    let prof = RadialProfile::new(0.4, 0.0, 2, 1.5).unwrap();
    let s = gradient_blowup(&prof, &log_sweep(1e-2, 1e-6, 9)).unwrap();
    let elapsed = start.elapsed();
    let slope_ok = (s.fit.slope + 0.1).abs() <= 0.01;
    let ok = slope_ok && s.budget_variation < 0.1 && elapsed < Duration::from_secs(60);
    verdict(
        7,
        ok,
        format!(
            "slope {:.4} (R² {:.4}), I_p variation {:.3}, δ→0 limit {:.4}, {elapsed:.2?}",
            s.fit.slope,
            s.fit.r_squared,
            s.budget_variation,
            s.budget_limit.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_08_sharpness_trace() {
    let start = Instant::now();
    let prof = RadialProfile::new(0.9, 0.0, 2, 3.0).unwrap();
    let s = trace_blowup(&prof, &log_sweep(1e-2, 1e-6, 9)).unwrap();
    let elapsed = start.elapsed();
    let slope_ok = (s.fit.slope + 0.1).abs() <= 0.01;
    let ok = slope_ok && s.budget_variation < 0.1 && elapsed < Duration::from_secs(60);
    verdict(
        8,
        ok,
        format!(
            "slope {:.4} (R² {:.4}), I_p variation {:.3}, δ→0 limit {:.4}, {elapsed:.2?}",
            s.fit.slope,
            s.fit.r_squared,
            s.budget_variation,
            s.budget_limit.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_09_curvature_floor() {
    let mut worst = f64::INFINITY;
    for (k, n) in [1usize, 2, 1, 2, 1].into_iter().enumerate() {
        let m = if n == 1 { 32 } else { 16 };
        let member = band_limited_member(n, m, 100 + k as u64, 0.4, 0.5);
        let problem = MAProblem::normalized(BackgroundGeometry::fixed_class(*member.problem.f().grid()), member.problem.f().clone())
            .unwrap();
        let sol = solve_ma(&problem, 1e-10, 50).unwrap();
        let f = ma_determinant_ratio(&sol.metric, problem.background()).unwrap();
        worst = worst.min(check_curvature_floor(&sol, &f, n).unwrap().margin);
    }
    verdict(9, worst >= -1e-6, format!("5 metrics, smallest margin inf e^F - floor = {worst:.4}"));
}

#[test]
fn criterion_10_manufactured_convergence() {
    let err = |m: usize| {
        let grid = GridSpec::new(2, m).unwrap();
        let bg = BackgroundGeometry::with_diagonal_chi(grid, &[0.5, 0.3], 0.5).unwrap();
        let bump = PeriodicBump {
            amplitude: 0.02,
            width: 0.5,
            dim: 4,
        };
        let (problem, exact) = manufactured_problem(&bg, &bump).unwrap();
        let sol = solve_ma(&problem, 1e-11, 30).unwrap();
        sol.phi.values().iter().zip(exact.values()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()))
    };
    let (e16, e32) = (err(16), err(32));
    let order = (e16 / e32).log2();
    // n = 1: one Poisson solve against an independent FFT oracle
    let grid = GridSpec::new(1, 32).unwrap();
    let bg = BackgroundGeometry::fixed_class(grid);
    let problem = MAProblem::normalized(bg, ScalarField::from_fn(grid, |x| (1.0 + 0.5 * (2.0 * PI * x[0]).cos()).ln())).unwrap();
    let sol = solve_ma(&problem, 1e-10, 1).unwrap();
    let rhs: Vec<f64> = problem.f().values().iter().map(|f| f.exp() - 1.0).collect();
    let h = grid.h();
    let mut oracle = spectral_solve(32, &rhs, |a, b| -(a + b) / (h * h));
    let top = oracle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    oracle.iter_mut().for_each(|v| *v -= top);
    let n1 = sol.phi.values().iter().zip(&oracle).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
    let ok = order >= 1.9 && n1 <= 1e-10;
    verdict(10, ok, format!("errors {e16:.3e} / {e32:.3e}, order {order:.3}, n=1 deviation {n1:.2e}"));
}

fn apriori_sweep(hold: Option<BudgetTarget>, amplitude: f64, p: f64) -> (Vec<AprioriMember>, Vec<f64>) {
    let grid = GridSpec::new(2, 16).unwrap();
    let deltas = vec![0.08, 0.04, 0.02, 0.01];
    let spec = FamilySpec {
        kind: FamilyKind::NearSingular { a: 0.4 },
        amplitude,
        seed: 0,
        t_values: vec![0.5],
        chi_eigenvalues: vec![vec![0.5, 0.5]],
        deltas: deltas.clone(),
        hold_budget: hold,
    };
    let params = ClassParams {
        p,
        ..Default::default()
    };
    let family = generate_family(grid, &spec, &ClassParams::default()).unwrap();
    let members = family
        .iter()
        .map(|m| {
            let sol = solve_ma(&m.problem, 1e-10, 50).unwrap();
            let r = functional_report(&m.problem, &sol, &params, 1.0, 1.0).unwrap();
            let mut coordinates: BTreeMap<String, f64> = m.coordinates.clone();
            coordinates.insert("p".to_owned(), p);
            AprioriMember {
                coordinates,
                budget: r.grad_f_lp,
                sup_h: r.sup_h,
                sup_q: r.sup_q,
                sup_s: r.sup_s,
            }
        })
        .collect();
    (members, deltas)
}

#[test]
fn criterion_11_apriori_sweep() {
    let (held, _) = apriori_sweep(Some(BudgetTarget { p: 5.0, value: 1.0 }), 1.0, 5.0);
    let reports = check_apriori_sweeps(&held, UNIFORMITY_FACTOR).unwrap();
    let h = &reports[0];
    let q = &reports[1];
    let (free, deltas) = apriori_sweep(None, 0.3, 1.5);
    let sup_h: Vec<f64> = free.iter().map(|m| m.sup_h).collect();
    let exponent = blowup_exponent(&deltas, &sup_h);
    let ok = h.pass && q.pass && exponent > 0.0;
    verdict(
        11,
        ok,
        format!(
            "p=5 budget drift {:.2e}, sup H ratio {:.3}, sup Q ratio {:.3}; p=1.5 sup H exponent {exponent:.3}",
            h.measured["budget_drift"], h.value, q.value
        ),
    );
}
