//! Multidimensional periodic FFTs and Fourier multipliers on a [`GridSpec`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

/// Forward/inverse FFT over all `2n` axes of a grid.
#[derive(Clone)]
pub struct GridFft {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("grid", &self.grid).finish()
    }
}

impl GridFft {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.m()),
            inverse: planner.plan_fft_inverse(grid.m()),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.grid.m();
        let len = self.grid.len();
        debug_assert_eq!(data.len(), len);
        for axis in 0..self.grid.dim() {
            let stride = self.grid.stride(axis);
            if stride == 1 {
                data.par_chunks_mut(m).for_each(|line| plan.process(line));
                continue;
            }
            // lines along `axis` live inside blocks of `m * stride` contiguous values
            let block = m * stride;
            data.par_chunks_mut(block).for_each(|blk| {
                let mut line = vec![Complex64::new(0.0, 0.0); m];
                for offset in 0..stride {
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = blk[offset + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        blk[offset + k * stride] = *v;
                    }
                }
            });
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N` normalisation.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }
}

/// Angular frequency `θ = 2πk/m` in `(-π, π]` of lattice index `k`.
#[inline]
pub fn angle(k: usize, m: usize) -> f64 {
    let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
    2.0 * PI * signed / m as f64
}

/// Per-axis angles of every Fourier mode of `grid`, in node order.
pub fn mode_angles(grid: &GridSpec, index: usize) -> [f64; 4] {
    let mut th = [0.0; 4];
    for (a, slot) in th.iter_mut().enumerate().take(grid.dim()) {
        *slot = angle(grid.coord(index, a), grid.m());
    }
    th
}

/// Real diagonal operator in Fourier space.
#[derive(Debug, Clone)]
pub struct FourierMultiplier {
    fft: GridFft,
    symbol: Vec<f64>,
}

impl FourierMultiplier {
    pub fn from_symbol<S>(grid: GridSpec, symbol: S) -> Self
    where
        S: Fn(&[f64; 4]) -> f64 + Sync,
    {
        let symbol = (0..grid.len())
            .into_par_iter()
            .map(|i| symbol(&mode_angles(&grid, i)))
            .collect();
        Self {
            fft: GridFft::new(grid),
            symbol,
        }
    }

    /// Pseudo-inverse: zero symbols (the constant mode) map to zero.
    pub fn pseudo_inverse(&self) -> Self {
        let scale = self.symbol.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        Self {
            fft: self.fft.clone(),
            symbol: self
                .symbol
                .iter()
                .map(|&s| if s.abs() <= 1e-14 * scale { 0.0 } else { 1.0 / s })
                .collect(),
        }
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = u.par_iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf.par_iter_mut()
            .zip(self.symbol.par_iter())
            .for_each(|(b, &s)| *b *= s);
        self.fft.inverse(&mut buf);
        buf.into_par_iter().map(|c| c.re).collect()
    }
}

/// Fourier symbol of the centred second difference matrix `D_ab` (real,
/// symmetric, negative semidefinite), interleaved axes.
pub fn second_difference_symbol(theta: &[f64; 4], dim: usize, h: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    let h2 = h * h;
    for a in 0..dim {
        for b in 0..dim {
            out[a][b] = if a == b {
                let s = (0.5 * theta[a]).sin();
                -4.0 * s * s / h2
            } else {
                -theta[a].sin() * theta[b].sin() / h2
            };
        }
    }
    out
}
