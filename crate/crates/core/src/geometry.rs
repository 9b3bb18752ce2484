//! Discrete Kähler geometry on the periodic lattice.
//!
//! Conventions used throughout the crate:
//!
//! * `∂_i = (∂_{x_i} - i ∂_{y_i}) / 2` and `(i∂∂̄u)_{ij} = ∂_i ∂̄_j u`.
//! * A Kähler form `ω = i g_{ij̄} dz_i ∧ dz̄_j` has Lebesgue density
//!   `ρ = 2^n n! det g`, so the identity metric gives `V = 2^n n!`.
//! * `Δ_ω u = g^{j̄i} ∂_i ∂̄_j u` (so `Δ_ω u ω^n = n i∂∂̄u ∧ ω^{n-1}`) and
//!   `|∇u|²_ω = g^{j̄i} ∂_i u ∂̄_j u`. With these two choices
//!   `∫ v Δ_ω u ω^n = -∫ <∇u, ∇v>_ω ω^n` carries no extra factor.
//!
//! Second derivatives use centred differences (compact three-point stencil on
//! the diagonal, four-point stencil for mixed pairs). Gradients paired with the
//! stiffness form in [`crate::green`] use forward differences; pointwise
//! gradient quantities use centred differences.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{KglError, Result};
use crate::field::{det_sum, volume_constant, MetricField, ScalarField};
use crate::grid::GridSpec;
use crate::herm::Herm;

/// Reference data `(ω_X, χ, t)` for the class `[χ + t ω_X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundGeometry {
    grid: GridSpec,
    omega_x: Herm,
    chi: Herm,
    t: f64,
    /// Lower bound for the bisectional curvature of `ω_X`; zero on flat tori.
    curvature_lower_bound: f64,
}

impl BackgroundGeometry {
    pub fn new(grid: GridSpec, omega_x: Herm, chi: Herm, t: f64) -> Result<Self> {
        let n = grid.n();
        if !(t > 0.0 && t <= 1.0) {
            return Err(KglError::InvalidArgument(format!("t must lie in (0, 1], got {t}")));
        }
        if omega_x.min_eig(n) <= 0.0 {
            return Err(KglError::NonPositiveMetric {
                index: 0,
                min_eig: omega_x.min_eig(n),
            });
        }
        if chi.min_eig(n) < -1e-14 {
            return Err(KglError::InvalidArgument(format!(
                "χ must be positive semidefinite (smallest eigenvalue {:e})",
                chi.min_eig(n)
            )));
        }
        Ok(Self {
            grid,
            omega_x,
            chi,
            t,
            curvature_lower_bound: 0.0,
        })
    }

    /// `ω_X = I`, `χ = diag(chi_eigs)`.
    pub fn with_diagonal_chi(grid: GridSpec, chi_eigs: &[f64], t: f64) -> Result<Self> {
        if chi_eigs.len() != grid.n() {
            return Err(KglError::InvalidArgument(format!(
                "need {} χ eigenvalues, got {}",
                grid.n(),
                chi_eigs.len()
            )));
        }
        Self::new(
            grid,
            Herm::identity(grid.n()),
            Herm::diagonal(grid.n(), chi_eigs),
            t,
        )
    }

    /// Fixed-class setting `χ = ω_X / 2`, `t = 1/2`, with `ω_X = I`.
    pub fn fixed_class(grid: GridSpec) -> Self {
        let n = grid.n();
        Self::new(grid, Herm::identity(n), Herm::scalar(n, 0.5), 0.5)
            .expect("fixed class is always valid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn omega_x(&self) -> &Herm {
        &self.omega_x
    }

    pub fn chi(&self) -> &Herm {
        &self.chi
    }

    pub fn curvature_lower_bound(&self) -> f64 {
        self.curvature_lower_bound
    }

    /// `ω̂_t = χ + t ω_X`.
    pub fn omega_hat(&self) -> Herm {
        self.chi.add(&self.omega_x.scale(self.t))
    }

    pub fn omega_x_field(&self) -> MetricField {
        MetricField::constant(self.grid, self.omega_x)
    }

    pub fn omega_hat_field(&self) -> MetricField {
        MetricField::constant(self.grid, self.omega_hat())
    }

    /// `V = ∫ ω_X^n`.
    pub fn volume(&self) -> f64 {
        volume_constant(self.n()) * self.omega_x.det(self.n())
    }

    /// `V_t = ∫ (χ + t ω_X)^n`.
    pub fn volume_t(&self) -> f64 {
        volume_constant(self.n()) * self.omega_hat().det(self.n())
    }

    /// `V_0 = ∫ χ^n`.
    pub fn volume_0(&self) -> f64 {
        volume_constant(self.n()) * self.chi.det(self.n())
    }

    /// `c_t = V_t / V`.
    pub fn c_t(&self) -> f64 {
        self.omega_hat().det(self.n()) / self.omega_x.det(self.n())
    }

    /// Kähler metric `ω̂_t + i∂∂̄φ`.
    pub fn metric_from_potential(&self, phi: &ScalarField) -> MetricField {
        i_del_delbar(phi).add_constant(&self.omega_hat())
    }
}

/// Centred second difference `∂_a ∂_b u` at `index` along real axes `a`, `b`.
#[inline]
pub(crate) fn second_difference(grid: &GridSpec, u: &[f64], index: usize, a: usize, b: usize) -> f64 {
    let h = grid.h();
    if a == b {
        let p = grid.shift(index, a, 1);
        let q = grid.shift(index, a, -1);
        (u[p] - 2.0 * u[index] + u[q]) / (h * h)
    } else {
        let ap = grid.shift(index, a, 1);
        let am = grid.shift(index, a, -1);
        let pp = u[grid.shift(ap, b, 1)];
        let pm = u[grid.shift(ap, b, -1)];
        let mp = u[grid.shift(am, b, 1)];
        let mm = u[grid.shift(am, b, -1)];
        (pp - pm - mp + mm) / (4.0 * h * h)
    }
}

/// Complex Hessian `∂_i ∂̄_j u` at one node.
#[inline]
pub(crate) fn complex_hessian_at(grid: &GridSpec, u: &[f64], index: usize) -> Herm {
    let n = grid.n();
    let mut out = Herm::ZERO;
    for i in 0..n {
        let (x, y) = (2 * i, 2 * i + 1);
        out.diag[i] =
            0.25 * (second_difference(grid, u, index, x, x) + second_difference(grid, u, index, y, y));
    }
    if n == 2 {
        let re = second_difference(grid, u, index, 0, 2) + second_difference(grid, u, index, 1, 3);
        let im = second_difference(grid, u, index, 0, 3) - second_difference(grid, u, index, 1, 2);
        out.off = Complex64::new(0.25 * re, 0.25 * im);
    }
    out
}

/// Converts a real Hessian (interleaved axes) into the complex Hessian `∂_i ∂̄_j`.
pub fn complex_hessian_from_real(n: usize, hess: &[[f64; 4]; 4]) -> Herm {
    let mut out = Herm::ZERO;
    for i in 0..n {
        let (x, y) = (2 * i, 2 * i + 1);
        out.diag[i] = 0.25 * (hess[x][x] + hess[y][y]);
    }
    if n == 2 {
        out.off = Complex64::new(
            0.25 * (hess[0][2] + hess[1][3]),
            0.25 * (hess[0][3] - hess[1][2]),
        );
    }
    out
}

/// `i∂∂̄φ` by centred differences.
pub fn i_del_delbar(phi: &ScalarField) -> MetricField {
    let grid = *phi.grid();
    let u = phi.values();
    let g: Vec<Herm> = (0..grid.len())
        .into_par_iter()
        .map(|i| complex_hessian_at(&grid, u, i))
        .collect();
    MetricField::new(grid, g).expect("length matches grid")
}

/// `tr_ω i∂∂̄u = g^{j̄i} ∂_i ∂̄_j u` with the centred Hessian.
pub fn nondivergence_laplacian(u: &ScalarField, metric: &MetricField) -> ScalarField {
    let grid = *u.grid();
    let n = grid.n();
    let vals = u.values();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let h = complex_hessian_at(&grid, vals, i);
            metric.at(i).inverse(n).trace_product(&h, n)
        })
        .collect();
    ScalarField::new(grid, out).expect("length matches grid")
}

/// Relative volume form `F = log((ω^n / V_ω) / (ω_X^n / V))`.
///
/// `V_ω` is the discrete volume of `metric`, which makes
/// `∫ e^F ω_X^n = V` hold to roundoff for every positive metric.
pub fn ma_determinant_ratio(metric: &MetricField, background: &BackgroundGeometry) -> Result<ScalarField> {
    metric.ensure_positive()?;
    let n = metric.n();
    let det_x = background.omega_x().det(n);
    let log_norm = (metric.volume() / background.volume()).ln();
    let f = metric.det().map(|d| (d / det_x).ln() - log_norm);
    Ok(f)
}

/// Ricci form `-i∂∂̄ log det g` (the background is flat) and scalar curvature
/// `R = g^{j̄i} Ric_{ij̄}`.
pub fn ricci_and_scalar(metric: &MetricField) -> Result<(MetricField, ScalarField)> {
    metric.ensure_positive()?;
    let n = metric.n();
    let log_det = metric.det().map(f64::ln);
    let ric = i_del_delbar(&log_det).scale(-1.0);
    let grid = *metric.grid();
    let r: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| metric.at(i).inverse(n).trace_product(ric.at(i), n))
        .collect();
    Ok((ric, ScalarField::new(grid, r)?))
}

/// `Σ f ρ h^{2n}` with `ρ` the density of `volume`.
pub fn integrate(f: &ScalarField, volume: &MetricField) -> f64 {
    let masses = volume.masses();
    let v = f.values();
    det_sum(v.len(), |i| v[i] * masses[i])
}

/// Forward-difference complex gradient `(∂_i u)` at a node.
#[inline]
pub(crate) fn forward_gradient_at(grid: &GridSpec, u: &[f64], index: usize) -> [Complex64; 2] {
    let h = grid.h();
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (i, slot) in out.iter_mut().enumerate().take(grid.n()) {
        let dx = (u[grid.shift(index, 2 * i, 1)] - u[index]) / h;
        let dy = (u[grid.shift(index, 2 * i + 1, 1)] - u[index]) / h;
        *slot = Complex64::new(0.5 * dx, -0.5 * dy);
    }
    out
}

/// Centred-difference complex gradient `(∂_i u)` at a node.
#[inline]
pub(crate) fn centred_gradient_at(grid: &GridSpec, u: &[f64], index: usize) -> [Complex64; 2] {
    let h = grid.h();
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (i, slot) in out.iter_mut().enumerate().take(grid.n()) {
        let dx = (u[grid.shift(index, 2 * i, 1)] - u[grid.shift(index, 2 * i, -1)]) / (2.0 * h);
        let dy = (u[grid.shift(index, 2 * i + 1, 1)] - u[grid.shift(index, 2 * i + 1, -1)]) / (2.0 * h);
        *slot = Complex64::new(0.5 * dx, -0.5 * dy);
    }
    out
}

/// Forward-difference real gradient (interleaved axes) at a node.
#[inline]
pub(crate) fn forward_real_gradient_at(grid: &GridSpec, u: &[f64], index: usize) -> [f64; 4] {
    let h = grid.h();
    let mut w = [0.0; 4];
    for (a, slot) in w.iter_mut().enumerate().take(grid.dim()) {
        *slot = (u[grid.shift(index, a, 1)] - u[index]) / h;
    }
    w
}

/// `|∇u|²_ω` with the forward-difference gradient paired with the stiffness
/// form, so that `∫|∇u|² ω^n = u^T K u` exactly.
pub fn metric_gradient_normsq(u: &ScalarField, metric: &MetricField) -> Result<ScalarField> {
    metric.ensure_positive()?;
    let grid = *u.grid();
    let n = grid.n();
    let vals = u.values();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let a = forward_gradient_at(&grid, vals, i);
            metric.at(i).inverse(n).quad_form(&a, n)
        })
        .collect();
    ScalarField::new(grid, out)
}

/// `|∇u|²_ω` with centred differences (second-order accurate pointwise).
pub fn centred_gradient_normsq(u: &ScalarField, metric: &MetricField) -> Result<ScalarField> {
    metric.ensure_positive()?;
    let grid = *u.grid();
    let n = grid.n();
    let vals = u.values();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let a = centred_gradient_at(&grid, vals, i);
            metric.at(i).inverse(n).quad_form(&a, n)
        })
        .collect();
    ScalarField::new(grid, out)
}

/// `|i∂∂̄u|²_ω = tr(g^{-1} H g^{-1} H)` pointwise with the centred Hessian.
pub fn complex_hessian_normsq(u: &ScalarField, metric: &MetricField) -> Result<ScalarField> {
    metric.ensure_positive()?;
    let grid = *u.grid();
    let n = grid.n();
    let vals = u.values();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let h = complex_hessian_at(&grid, vals, i);
            let p = metric.at(i).inverse(n);
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    // tr(P H P H) = Σ (P H)_{ab} (P H)_{ba}
                    let mut ab = Complex64::new(0.0, 0.0);
                    let mut ba = Complex64::new(0.0, 0.0);
                    for c in 0..n {
                        ab += p.get(a, c) * h.get(c, b);
                        ba += p.get(b, c) * h.get(c, a);
                    }
                    s += (ab * ba).re;
                }
            }
            s
        })
        .collect();
    ScalarField::new(grid, out)
}

/// `|S|²_g` where `S = Γ(g) - Γ(g_X)`; the flat background contributes no
/// Christoffel symbols, so `S^i_{jk} = g^{i l̄} ∂_j g_{k l̄}`.
pub fn christoffel_normsq(metric: &MetricField) -> Result<ScalarField> {
    metric.ensure_positive()?;
    let grid = *metric.grid();
    let n = grid.n();
    let h = grid.h();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let g = metric.at(idx);
            let inv = g.inverse(n);
            // dg[j][k][l] = ∂_j g_{k l̄}
            let mut dg = [[[Complex64::new(0.0, 0.0); 2]; 2]; 2];
            for (j, dgj) in dg.iter_mut().enumerate().take(n) {
                let xp = metric.at(grid.shift(idx, 2 * j, 1));
                let xm = metric.at(grid.shift(idx, 2 * j, -1));
                let yp = metric.at(grid.shift(idx, 2 * j + 1, 1));
                let ym = metric.at(grid.shift(idx, 2 * j + 1, -1));
                for k in 0..n {
                    for l in 0..n {
                        let dx = (xp.get(k, l) - xm.get(k, l)) / (2.0 * h);
                        let dy = (yp.get(k, l) - ym.get(k, l)) / (2.0 * h);
                        dgj[k][l] = 0.5 * (dx - Complex64::new(0.0, 1.0) * dy);
                    }
                }
            }
            // gamma[i][j][k] = Σ_l g^{i l̄} ∂_j g_{k l̄}, with g^{i l̄} = (M^{-1})_{l i}
            let mut gamma = [[[Complex64::new(0.0, 0.0); 2]; 2]; 2];
            for (i, gi) in gamma.iter_mut().enumerate().take(n) {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = Complex64::new(0.0, 0.0);
                        for l in 0..n {
                            s += inv.get(l, i) * dg[j][k][l];
                        }
                        gi[j][k] = s;
                    }
                }
            }
            // |S|² = Σ S^i_{jk} conj(S^l_{pq}) g_{i l̄} g^{j p̄} g^{k q̄}
            let mut total = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            for p in 0..n {
                                for q in 0..n {
                                    total += gamma[i][j][k]
                                        * gamma[l][p][q].conj()
                                        * g.get(i, l)
                                        * inv.get(p, j)
                                        * inv.get(q, k);
                                }
                            }
                        }
                    }
                }
            }
            total.re
        })
        .collect();
    ScalarField::new(grid, out)
}
