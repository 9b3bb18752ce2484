//! Divergence-form Laplace-Beltrami operators and normalized Green's functions.
//!
//! The stiffness form is
//! `u^T K v = Σ_y μ_y (D u)_y^T A_y (D v)_y`, with `D` the forward difference
//! along each real axis, `A_y` the real form of `g_y^{-1}` and `μ_y` the
//! `ω^n`-mass of node `y`. Then `Δ_ω = -μ^{-1} K` and
//! `∫ v Δ_ω u ω^n = -∫ <∇u, ∇v> ω^n` holds exactly.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{KglError, Result};
use crate::fft::FourierMultiplier;
use crate::field::{det_sum, MetricField, ScalarField};
use crate::geometry::forward_real_gradient_at;
use crate::grid::GridSpec;
use crate::linalg::{deflated_pcg, KrylovStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    Jacobi,
    #[default]
    Fourier,
}

#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    metric: MetricField,
    /// `μ_y A_y` per node.
    coeff: Vec<[[f64; 4]; 4]>,
    masses: Vec<f64>,
    volume: f64,
    diagonal: Vec<f64>,
    fourier: FourierMultiplier,
}

pub fn assemble_laplacian(metric: &MetricField) -> Result<LaplacianOperator> {
    metric.ensure_positive()?;
    let grid = *metric.grid();
    let n = grid.n();
    let dim = grid.dim();
    let h = grid.h();
    let masses = metric.masses();
    let coeff: Vec<[[f64; 4]; 4]> = metric
        .matrices()
        .par_iter()
        .zip(masses.par_iter())
        .map(|(g, &mu)| {
            let mut a = g.inverse(n).real_form(n);
            for row in a.iter_mut() {
                for v in row.iter_mut() {
                    *v *= mu;
                }
            }
            a
        })
        .collect();
    let diagonal: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let c = &coeff[x];
            let mut d = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    d += c[a][b];
                }
                d += coeff[grid.shift(x, a, -1)][a][a];
            }
            d / (h * h)
        })
        .collect();
    let mut mean = [[0.0; 4]; 4];
    for a in 0..dim {
        for b in 0..dim {
            mean[a][b] = det_sum(coeff.len(), |i| coeff[i][a][b]) / coeff.len() as f64;
        }
    }
    let fourier = FourierMultiplier::from_symbol(grid, |theta| {
        stiffness_symbol(&mean, theta, dim, h)
    })
    .pseudo_inverse();
    let volume = det_sum(masses.len(), |i| masses[i]);
    Ok(LaplacianOperator {
        metric: metric.clone(),
        coeff,
        masses,
        volume,
        diagonal,
        fourier,
    })
}

/// `Σ_ab conj(σ_a) C_ab σ_b` with `σ_a = (e^{iθ_a} - 1)/h`.
pub fn stiffness_symbol(c: &[[f64; 4]; 4], theta: &[f64; 4], dim: usize, h: f64) -> f64 {
    let mut s = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            // Re(conj(e^{iθa} - 1)(e^{iθb} - 1))
            let re = (theta[a] - theta[b]).cos() - theta[a].cos() - theta[b].cos() + 1.0;
            s += c[a][b] * re;
        }
    }
    s / (h * h)
}

impl LaplacianOperator {
    pub fn grid(&self) -> &GridSpec {
        self.metric.grid()
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `Σ μ_y`, the discrete `V_t`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn stiffness_diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `K u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let grid = *self.grid();
        let dim = grid.dim();
        let h = grid.h();
        let flux: Vec<[f64; 4]> = (0..grid.len())
            .into_par_iter()
            .map(|y| {
                let w = forward_real_gradient_at(&grid, u, y);
                let c = &self.coeff[y];
                let mut f = [0.0; 4];
                for a in 0..dim {
                    for b in 0..dim {
                        f[a] += c[a][b] * w[b];
                    }
                }
                f
            })
            .collect();
        (0..grid.len())
            .into_par_iter()
            .map(|x| {
                let mut s = 0.0;
                for a in 0..dim {
                    s += flux[grid.shift(x, a, -1)][a] - flux[x][a];
                }
                s / h
            })
            .collect()
    }

    /// `Δ_ω u = -K u / μ`.
    pub fn laplacian(&self, u: &ScalarField) -> ScalarField {
        let ku = self.apply(u.values());
        let vals = ku
            .par_iter()
            .zip(self.masses.par_iter())
            .map(|(k, m)| -k / m)
            .collect();
        ScalarField::new(*self.grid(), vals).expect("length matches grid")
    }

    /// `∫ <∇u, ∇v> ω^n = u^T K v`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let kv = self.apply(v);
        det_sum(u.len(), |i| u[i] * kv[i])
    }

    /// `∫ u ω^n / V_t`.
    pub fn average(&self, u: &[f64]) -> f64 {
        det_sum(u.len(), |i| u[i] * self.masses[i]) / self.volume
    }

    fn precondition(&self, kind: Preconditioner, r: &[f64]) -> Vec<f64> {
        match kind {
            Preconditioner::Jacobi => r.iter().zip(&self.diagonal).map(|(r, d)| r / d).collect(),
            Preconditioner::Fourier => self.fourier.apply(r),
        }
    }

    /// Solves `K u = b` for zero-sum `b`, returning the `μ`-mean-zero solution.
    pub fn solve(
        &self,
        b: &[f64],
        tol: f64,
        max_iter: usize,
        kind: Preconditioner,
    ) -> Result<(Vec<f64>, KrylovStats)> {
        let (mut u, stats) = deflated_pcg(
            |v| self.apply(v),
            |r| self.precondition(kind, r),
            b,
            None,
            tol,
            max_iter,
        )?;
        let avg = self.average(&u);
        u.par_iter_mut().for_each(|v| *v -= avg);
        Ok((u, stats))
    }
}

/// Green's function `G(x, ·)` of one source.
#[derive(Debug, Clone)]
pub struct GreenField {
    pub source: usize,
    pub g: ScalarField,
    /// `-inf G`.
    pub c_l: f64,
    /// `G + C_l + 1 ≥ 1`.
    pub positive: ScalarField,
    /// `|∇G|_ω` with the paired forward-difference gradient.
    pub gradnorm: ScalarField,
    pub stats: KrylovStats,
}

impl GreenField {
    /// Builds derived fields for a given mean-zero `G`.
    pub fn from_values(op: &LaplacianOperator, source: usize, g: ScalarField, stats: KrylovStats) -> Result<Self> {
        let c_l = -g.min();
        let positive = g.map(|v| v + c_l + 1.0);
        let gradnorm = crate::geometry::metric_gradient_normsq(&g, op.metric())?.map(|v| v.max(0.0).sqrt());
        Ok(Self {
            source,
            g,
            c_l,
            positive,
            gradnorm,
            stats,
        })
    }
}

/// Right-hand side `e_x - μ/V_t` of the Green equation `K G = e_x - μ/V_t`.
pub fn green_rhs(op: &LaplacianOperator, source: usize) -> Vec<f64> {
    let v = op.volume();
    let mut b: Vec<f64> = op.masses().iter().map(|m| -m / v).collect();
    b[source] += 1.0;
    b
}

pub fn solve_green(op: &LaplacianOperator, source: usize, tol: f64) -> Result<GreenField> {
    solve_green_with(op, source, tol, 10_000, Preconditioner::Fourier)
}

pub fn solve_green_with(
    op: &LaplacianOperator,
    source: usize,
    tol: f64,
    max_iter: usize,
    kind: Preconditioner,
) -> Result<GreenField> {
    if tol <= 0.0 {
        return Err(KglError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if source >= op.grid().len() {
        return Err(KglError::InvalidArgument(format!("source {source} outside grid")));
    }
    let b = green_rhs(op, source);
    let (g, stats) = op.solve(&b, tol, max_iter, kind)?;
    GreenField::from_values(op, source, ScalarField::new(*op.grid(), g)?, stats)
}

/// Solves several sources in parallel; results follow the order of `sources`.
pub fn solve_greens(op: &LaplacianOperator, sources: &[usize], tol: f64) -> Result<Vec<GreenField>> {
    sources.par_iter().map(|&x| solve_green(op, x, tol)).collect()
}

/// `max_x |u(x) - avg_ω u - ∫ <∇G(x,·), ∇u> ω^n|` over the given sources.
pub fn representation_check(op: &LaplacianOperator, greens: &[GreenField], u: &ScalarField) -> f64 {
    let ku = op.apply(u.values());
    let avg = op.average(u.values());
    greens
        .iter()
        .map(|gf| {
            let g = gf.g.values();
            let pairing = det_sum(g.len(), |i| g[i] * ku[i]);
            (u.values()[gf.source] - avg - pairing).abs()
        })
        .fold(0.0, f64::max)
}

/// `count` distinct pseudo-random nodes followed by `extra` nodes not already drawn.
pub fn sample_sources(grid: &GridSpec, count: usize, seed: u64, extra: &[usize]) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = sample(&mut rng, grid.len(), count.min(grid.len())).into_vec();
    for &e in extra {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herm::Herm;
    use num_complex::Complex64;

    #[test]
    fn flat_n1_is_half_five_point() {
        let grid = GridSpec::new(1, 8).unwrap();
        let op = assemble_laplacian(&MetricField::identity(grid)).unwrap();
        let mut u = vec![0.0; grid.len()];
        let x = grid.index_of(&[3, 4]);
        u[x] = 1.0;
        let ku = op.apply(&u);
        assert!((ku[x] - 2.0).abs() < 1e-12);
        assert!((ku[grid.shift(x, 0, 1)] + 0.5).abs() < 1e-12);
        assert!((ku[grid.shift(x, 1, -1)] + 0.5).abs() < 1e-12);
        assert!((ku.iter().sum::<f64>()).abs() < 1e-12);
        assert!((op.stiffness_diagonal()[x] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constants_in_kernel_and_symmetric() {
        let grid = GridSpec::new(2, 8).unwrap();
        let mats: Vec<Herm> = (0..grid.len())
            .map(|i| Herm {
                diag: [1.0 + 0.3 * ((i % 7) as f64 / 7.0), 1.2],
                off: Complex64::new(0.1, -0.05 * ((i % 3) as f64)),
            })
            .collect();
        let op = assemble_laplacian(&MetricField::new(grid, mats).unwrap()).unwrap();
        let ones = vec![1.0; grid.len()];
        assert!(op.apply(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-12);
        let u: Vec<f64> = (0..grid.len()).map(|i| ((i * 31) % 19) as f64 / 19.0).collect();
        let v: Vec<f64> = (0..grid.len()).map(|i| ((i * 17) % 23) as f64 / 23.0).collect();
        let a = op.energy(&u, &v);
        let b = op.energy(&v, &u);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let sum: f64 = op.masses().iter().sum();
        assert!((sum - op.volume()).abs() < 1e-12);
    }
}
