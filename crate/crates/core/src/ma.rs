//! Complex Monge-Ampère solver for `(ω̂_t + i∂∂̄φ)^n = c_t e^F ω_X^n`, `sup φ = 0`.
//!
//! The discrete equation carries a free constant `κ`:
//! `log det(ĝ + H_φ) - log det g_X - F - log c_t = κ`, with `H_φ` the centred
//! complex Hessian. For a normalized `F` the constant is exactly zero when
//! `n = 1` and of order `h²` when `n = 2`. It also absorbs constant shifts of
//! `F`, so `F` and `F + c` produce the same potential.

use rayon::prelude::*;

use crate::error::{KglError, Result};
use crate::fft::{second_difference_symbol, FourierMultiplier};
use crate::field::{det_sum, MetricField, ScalarField};
use crate::geometry::{complex_hessian_at, complex_hessian_from_real, i_del_delbar, BackgroundGeometry};
use crate::herm::Herm;
use crate::linalg::gmres;

/// Tolerance on `|(1/V) ∫ e^F ω_X^n - 1|` accepted by [`MAProblem::new`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MAProblem {
    background: BackgroundGeometry,
    f: ScalarField,
}

impl MAProblem {
    /// Errors unless `F` is finite and `∫ e^F ω_X^n = V`.
    pub fn new(background: BackgroundGeometry, f: ScalarField) -> Result<Self> {
        let p = Self::new_unnormalized(background, f)?;
        let defect = (p.exp_f_average() - 1.0).abs();
        if defect > NORMALIZATION_TOL {
            return Err(KglError::InvalidArgument(format!(
                "∫e^F ω_X^n / V deviates from 1 by {defect:e}"
            )));
        }
        Ok(p)
    }

    /// Shifts `F` by a constant so that `∫ e^F ω_X^n = V`.
    pub fn normalized(background: BackgroundGeometry, f: ScalarField) -> Result<Self> {
        let p = Self::new_unnormalized(background, f)?;
        let shift = p.exp_f_average().ln();
        let f = p.f.map(|v| v - shift);
        Self::new(p.background, f)
    }

    /// Accepts any finite `F`; the solver's free constant absorbs the mismatch.
    pub fn new_unnormalized(background: BackgroundGeometry, f: ScalarField) -> Result<Self> {
        if f.grid() != background.grid() {
            return Err(KglError::InvalidArgument("F and background use different grids".into()));
        }
        if !f.is_finite() {
            return Err(KglError::InvalidArgument("F has non-finite values".into()));
        }
        Ok(Self { background, f })
    }

    pub fn background(&self) -> &BackgroundGeometry {
        &self.background
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    /// `(1/V) ∫ e^F ω_X^n`.
    pub fn exp_f_average(&self) -> f64 {
        let v = self.f.values();
        // ω_X is constant, so every node carries the same mass
        det_sum(v.len(), |i| v[i].exp()) / v.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct MASolution {
    pub phi: ScalarField,
    pub metric: MetricField,
    /// `max |log(det ratio) - F - log c_t - κ|`.
    pub residual: f64,
    /// Free constant `κ` of the discrete equation.
    pub normalizer: f64,
    pub iterations: usize,
    pub newton_damping_history: Vec<f64>,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub max_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            gmres_restart: 30,
            gmres_max_iter: 600,
            max_halvings: 30,
        }
    }
}

pub fn solve_ma(problem: &MAProblem, tol: f64, max_iter: usize) -> Result<MASolution> {
    let settings = SolverSettings {
        tol,
        max_iter,
        ..SolverSettings::default()
    };
    solve_ma_with(problem, &settings, None)
}

/// Solver entry point with explicit settings and an optional warm start.
pub fn solve_ma_with(
    problem: &MAProblem,
    settings: &SolverSettings,
    initial: Option<&ScalarField>,
) -> Result<MASolution> {
    if settings.tol <= 0.0 {
        return Err(KglError::InvalidArgument(format!("tolerance must be positive, got {}", settings.tol)));
    }
    match problem.background().n() {
        1 => solve_linear(problem, settings),
        _ => solve_newton(problem, settings, initial),
    }
}

/// Pointwise residual `log det(ĝ + H_φ) - log det g_X - F - log c_t - κ`.
fn residual_field(problem: &MAProblem, phi: &[f64], kappa: f64) -> Option<Vec<f64>> {
    let bg = problem.background();
    let grid = *bg.grid();
    let n = grid.n();
    let hat = bg.omega_hat();
    let offset = bg.omega_x().det(n).ln() + bg.c_t().ln() + kappa;
    let f = problem.f().values();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let g = hat.add(&complex_hessian_at(&grid, phi, i));
            if g.min_eig(n) <= 1e-8 * g.trace(n) {
                None
            } else {
                Some(g.det(n).ln() - offset - f[i])
            }
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn finish(problem: &MAProblem, mut phi: Vec<f64>, kappa: f64, iterations: usize, damping: Vec<f64>, history: Vec<f64>) -> Result<MASolution> {
    let grid = *problem.background().grid();
    let top = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    phi.par_iter_mut().for_each(|v| *v -= top);
    let phi = ScalarField::new(grid, phi)?;
    let metric = problem.background().metric_from_potential(&phi);
    metric.ensure_positive()?;
    let res = residual_field(problem, phi.values(), kappa)
        .ok_or(KglError::LeftKahlerCone { residual: f64::INFINITY })?;
    Ok(MASolution {
        phi,
        metric,
        residual: max_abs(&res),
        normalizer: kappa,
        iterations,
        newton_damping_history: damping,
        residual_history: history,
    })
}

/// `n = 1`: `ĝ + φ_{zz̄} = c_t e^{F + κ} g_X` is the Poisson equation
/// `φ_{zz̄} = ĝ (e^{F + κ} - 1)`, solved in one FFT pass.
fn solve_linear(problem: &MAProblem, settings: &SolverSettings) -> Result<MASolution> {
    let bg = problem.background();
    let grid = *bg.grid();
    let hat = bg.omega_hat().diag[0];
    let kappa = -problem.exp_f_average().ln();
    let rhs: Vec<f64> = problem
        .f()
        .values()
        .par_iter()
        .map(|&f| hat * ((f + kappa).exp() - 1.0))
        .collect();
    let inv = poisson_multiplier(grid).pseudo_inverse();
    let phi = inv.apply(&rhs);
    let sol = finish(problem, phi, kappa, 1, vec![1.0], Vec::new())?;
    if sol.residual > settings.tol {
        return Err(KglError::NotConverged {
            iterations: 1,
            residual: sol.residual,
        });
    }
    Ok(sol)
}

/// Fourier multiplier of `u ↦ (i∂∂̄u)_{11̄}` for `n = 1`.
pub fn poisson_multiplier(grid: crate::grid::GridSpec) -> FourierMultiplier {
    let h = grid.h();
    FourierMultiplier::from_symbol(grid, move |th| {
        let d = second_difference_symbol(th, 2, h);
        0.25 * (d[0][0] + d[1][1])
    })
}

fn solve_newton(problem: &MAProblem, settings: &SolverSettings, initial: Option<&ScalarField>) -> Result<MASolution> {
    let bg = problem.background();
    let grid = *bg.grid();
    let n = grid.n();
    let len = grid.len();
    let hat = bg.omega_hat();
    let mut phi = initial.map_or_else(|| vec![0.0; len], |p| p.values().to_vec());
    let mean = det_sum(len, |i| phi[i]) / len as f64;
    phi.par_iter_mut().for_each(|v| *v -= mean);
    let mut kappa = 0.0;
    let mut res = residual_field(problem, &phi, kappa).ok_or(KglError::LeftKahlerCone { residual: f64::INFINITY })?;
    // the best constant for the initial guess is the mean residual
    kappa = det_sum(len, |i| res[i]) / len as f64;
    res.par_iter_mut().for_each(|r| *r -= kappa);
    let mut rnorm = max_abs(&res);
    let mut damping = Vec::new();
    let mut history = vec![rnorm];
    let mut iterations = 0;
    while rnorm > settings.tol {
        if iterations >= settings.max_iter {
            return Err(KglError::NotConverged {
                iterations,
                residual: rnorm,
            });
        }
        iterations += 1;
        let inverse: Vec<Herm> = (0..len)
            .into_par_iter()
            .map(|i| hat.add(&complex_hessian_at(&grid, &phi, i)).inverse(n))
            .collect();
        let mut mean_inv = Herm::ZERO;
        mean_inv.diag[0] = det_sum(len, |i| inverse[i].diag[0]) / len as f64;
        mean_inv.diag[1] = det_sum(len, |i| inverse[i].diag[1]) / len as f64;
        mean_inv.off.re = det_sum(len, |i| inverse[i].off.re) / len as f64;
        mean_inv.off.im = det_sum(len, |i| inverse[i].off.im) / len as f64;
        let h = grid.h();
        let frozen = FourierMultiplier::from_symbol(grid, |th| {
            let sym = complex_hessian_from_real(n, &second_difference_symbol(th, grid.dim(), h));
            mean_inv.trace_product(&sym, n)
        })
        .pseudo_inverse();
        // bordered operator (δ, c) ↦ (J δ - c, mean δ)
        let apply = |v: &[f64]| -> Vec<f64> {
            let (d, c) = (&v[..len], v[len]);
            let mut out: Vec<f64> = (0..len)
                .into_par_iter()
                .map(|i| inverse[i].trace_product(&complex_hessian_at(&grid, d, i), n) - c)
                .collect();
            out.push(det_sum(len, |i| d[i]) / len as f64);
            out
        };
        let precondition = |v: &[f64]| -> Vec<f64> {
            let (r, s) = (&v[..len], v[len]);
            let rbar = det_sum(len, |i| r[i]) / len as f64;
            let centred: Vec<f64> = r.par_iter().map(|x| x - rbar).collect();
            let mut out = frozen.apply(&centred);
            out.par_iter_mut().for_each(|x| *x += s);
            out.push(-rbar);
            out
        };
        let mut rhs: Vec<f64> = res.par_iter().map(|r| -r).collect();
        rhs.push(0.0);
        let rhs_norm = crate::field::dot(&rhs, &rhs).sqrt();
        let forcing = (0.1 * rnorm).clamp(1e-10, 1e-2);
        let (step, _) = gmres(
            apply,
            precondition,
            &rhs,
            forcing * rhs_norm,
            settings.gmres_restart,
            settings.gmres_max_iter,
        )?;
        let (delta, dkappa) = (&step[..len], step[len]);
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut positivity_failures = 0;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = phi.par_iter().zip(delta.par_iter()).map(|(p, d)| p + alpha * d).collect();
            let trial_kappa = kappa + alpha * dkappa;
            match residual_field(problem, &trial, trial_kappa) {
                None => positivity_failures += 1,
                Some(r) => {
                    let norm = max_abs(&r);
                    if norm <= rnorm {
                        accepted = Some((trial, trial_kappa, r, norm));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((p, k, r, norm)) => {
                phi = p;
                kappa = k;
                res = r;
                rnorm = norm;
                damping.push(alpha);
                history.push(rnorm);
            }
            None if positivity_failures > settings.max_halvings / 2 => {
                return Err(KglError::LeftKahlerCone { residual: rnorm });
            }
            None => {
                return Err(KglError::NotConverged {
                    iterations,
                    residual: rnorm,
                });
            }
        }
    }
    finish(problem, phi, kappa, iterations, damping, history)
}

/// Exact potential, complex Hessian and right-hand side for manufactured tests.
pub trait AnalyticPotential: Sync {
    fn value(&self, x: &[f64]) -> f64;
    /// Real gradient in interleaved axes.
    fn gradient(&self, x: &[f64]) -> [f64; 4];
    /// Real Hessian in interleaved axes.
    fn hessian(&self, x: &[f64]) -> [[f64; 4]; 4];
}

/// `A exp(-Σ_a sin²(π x_a) / w)`: a smooth periodic bump peaked at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicBump {
    pub amplitude: f64,
    pub width: f64,
    pub dim: usize,
}

impl PeriodicBump {
    fn parts(&self, x: &[f64]) -> (f64, [f64; 4], [f64; 4]) {
        let pi = std::f64::consts::PI;
        let mut e = 0.0;
        let mut s1 = [0.0; 4];
        let mut s2 = [0.0; 4];
        for a in 0..self.dim {
            let (s, c) = (pi * x[a]).sin_cos();
            e += s * s;
            // derivatives of -sin²(πx)/w
            s1[a] = -2.0 * pi * s * c / self.width;
            s2[a] = -2.0 * pi * pi * (c * c - s * s) / self.width;
        }
        (self.amplitude * (-e / self.width).exp(), s1, s2)
    }
}

impl AnalyticPotential for PeriodicBump {
    fn value(&self, x: &[f64]) -> f64 {
        self.parts(x).0
    }

    fn gradient(&self, x: &[f64]) -> [f64; 4] {
        let (v, s1, _) = self.parts(x);
        let mut g = [0.0; 4];
        for a in 0..self.dim {
            g[a] = v * s1[a];
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> [[f64; 4]; 4] {
        let (v, s1, s2) = self.parts(x);
        let mut out = [[0.0; 4]; 4];
        for a in 0..self.dim {
            for b in 0..self.dim {
                out[a][b] = v * (s1[a] * s1[b] + if a == b { s2[a] } else { 0.0 });
            }
        }
        out
    }
}

/// Manufactured problem whose exact solution is `potential` (up to the sup
/// normalisation). `F` uses the analytic Hessian, so the discrete solution
/// differs from the exact one by the truncation error only.
pub fn manufactured_problem<P: AnalyticPotential>(
    background: &BackgroundGeometry,
    potential: &P,
) -> Result<(MAProblem, ScalarField)> {
    let grid = *background.grid();
    let n = grid.n();
    let hat = background.omega_hat();
    let det_x = background.omega_x().det(n);
    let c_t = background.c_t();
    let mut bad = None;
    let f: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let g = hat.add(&complex_hessian_from_real(n, &potential.hessian(&x)));
            if g.min_eig(n) <= 0.0 && bad.is_none() {
                bad = Some((i, g.min_eig(n)));
            }
            (g.det(n) / (det_x * c_t)).ln()
        })
        .collect();
    if let Some((index, min_eig)) = bad {
        return Err(KglError::NonPositiveMetric { index, min_eig });
    }
    let exact = ScalarField::from_fn(grid, |x| potential.value(x));
    let top = exact.max();
    let exact = exact.map(|v| v - top);
    let problem = MAProblem::normalized(background.clone(), ScalarField::new(grid, f)?)?;
    Ok((problem, exact))
}

/// `∫ (ω̂_t + i∂∂̄φ)^n`.
pub fn solution_volume(solution: &MASolution) -> f64 {
    solution.metric.volume()
}

/// Discrete `F` of a solved metric; equals the problem `F` up to the residual.
pub fn recovered_f(solution: &MASolution, background: &BackgroundGeometry) -> Result<ScalarField> {
    crate::geometry::ma_determinant_ratio(&solution.metric, background)
}

/// `ω̂_t + i∂∂̄φ` recomputed from scratch.
pub fn metric_of(background: &BackgroundGeometry, phi: &ScalarField) -> MetricField {
    i_del_delbar(phi).add_constant(&background.omega_hat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn zero_rhs_gives_zero_potential() {
        for n in [1, 2] {
            let grid = GridSpec::new(n, 8).unwrap();
            let bg = BackgroundGeometry::fixed_class(grid);
            let p = MAProblem::new(bg, ScalarField::zeros(grid)).unwrap();
            let s = solve_ma(&p, 1e-12, 10).unwrap();
            assert!(s.phi.max_abs() < 1e-14);
            assert!(s.residual < 1e-14);
        }
    }

    #[test]
    fn unnormalized_rejected_by_checked_constructor() {
        let grid = GridSpec::new(1, 8).unwrap();
        let bg = BackgroundGeometry::fixed_class(grid);
        assert!(MAProblem::new(bg.clone(), ScalarField::constant(grid, 0.1)).is_err());
        assert!(MAProblem::normalized(bg, ScalarField::constant(grid, 0.1)).is_ok());
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let bump = PeriodicBump {
            amplitude: 0.3,
            width: 0.2,
            dim: 4,
        };
        let x = [0.13, 0.71, 0.42, 0.05];
        let eps = 1e-5;
        let g = bump.gradient(&x);
        let hs = bump.hessian(&x);
        for a in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += eps;
            xm[a] -= eps;
            let fd = (bump.value(&xp) - bump.value(&xm)) / (2.0 * eps);
            assert!((fd - g[a]).abs() < 1e-7);
            let gp = bump.gradient(&xp);
            let gm = bump.gradient(&xm);
            for b in 0..4 {
                assert!(((gp[b] - gm[b]) / (2.0 * eps) - hs[a][b]).abs() < 1e-6);
            }
        }
    }
}
