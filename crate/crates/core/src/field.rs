//! Grid-sampled scalar and Hermitian-matrix fields.

use rayon::prelude::*;

use crate::error::{KglError, Result};
use crate::grid::GridSpec;
use crate::herm::Herm;

/// Chunk length for deterministic parallel reductions.
const REDUCE_CHUNK: usize = 4096;

/// Sum of `f(i)` over `0..len`, computed in fixed chunks and combined in
/// index order so the result does not depend on the thread count.
pub fn det_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(REDUCE_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * REDUCE_CHUNK;
            let hi = (lo + REDUCE_CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    det_sum(a.len(), |i| a[i] * b[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KglError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the real coordinates of every node.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64) -> f64 + Sync,
    {
        Self {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> ScalarField
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        det_sum(self.values.len(), |i| self.values[i]) / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grid: GridSpec,
    g: Vec<Herm>,
}

impl MetricField {
    pub fn new(grid: GridSpec, g: Vec<Herm>) -> Result<Self> {
        if g.len() != grid.len() {
            return Err(KglError::InvalidArgument(format!(
                "expected {} matrices, got {}",
                grid.len(),
                g.len()
            )));
        }
        Ok(Self { grid, g })
    }

    pub fn constant(grid: GridSpec, value: Herm) -> Self {
        Self {
            grid,
            g: vec![value; grid.len()],
        }
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::constant(grid, Herm::identity(grid.n()))
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    #[inline]
    pub fn at(&self, index: usize) -> &Herm {
        &self.g[index]
    }

    pub fn matrices(&self) -> &[Herm] {
        &self.g
    }

    pub fn add(&self, other: &MetricField) -> MetricField {
        Self {
            grid: self.grid,
            g: self
                .g
                .par_iter()
                .zip(other.g.par_iter())
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn add_constant(&self, c: &Herm) -> MetricField {
        Self {
            grid: self.grid,
            g: self.g.par_iter().map(|a| a.add(c)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> MetricField {
        Self {
            grid: self.grid,
            g: self.g.par_iter().map(|a| a.scale(s)).collect(),
        }
    }

    /// `true` when every matrix equals the first one.
    pub fn is_constant(&self) -> bool {
        self.g.iter().all(|a| *a == self.g[0])
    }

    /// Smallest eigenvalue over the field and the node where it occurs.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let n = self.n();
        let mut best = (f64::INFINITY, 0);
        for (i, a) in self.g.iter().enumerate() {
            let e = a.min_eig(n);
            if e < best.0 || e.is_nan() {
                best = (e, i);
            }
        }
        best
    }

    /// Errors with `NonPositiveMetric` unless every eigenvalue is positive.
    pub fn ensure_positive(&self) -> Result<()> {
        let (min_eig, index) = self.min_eigenvalue();
        if min_eig > 0.0 && min_eig.is_finite() {
            Ok(())
        } else {
            Err(KglError::NonPositiveMetric { index, min_eig })
        }
    }

    pub fn det(&self) -> ScalarField {
        let n = self.n();
        ScalarField {
            grid: self.grid,
            values: self.g.par_iter().map(|a| a.det(n)).collect(),
        }
    }

    /// Volume density `2^n n! det g` of `ω^n` against Lebesgue measure.
    pub fn volume_density(&self) -> ScalarField {
        let c = volume_constant(self.n());
        self.det().map(|d| c * d)
    }

    /// Per-node masses `ρ h^{2n}`.
    pub fn masses(&self) -> Vec<f64> {
        let c = volume_constant(self.n()) * self.grid.cell_volume();
        let n = self.n();
        self.g.par_iter().map(|a| c * a.det(n)).collect()
    }

    pub fn volume(&self) -> f64 {
        let masses = self.masses();
        det_sum(masses.len(), |i| masses[i])
    }

    pub fn trace_against(&self, reference: &MetricField) -> ScalarField {
        let n = self.n();
        ScalarField {
            grid: self.grid,
            values: self
                .g
                .par_iter()
                .zip(reference.g.par_iter())
                .map(|(g, r)| r.inverse(n).trace_product(g, n))
                .collect(),
        }
    }
}

/// `2^n n!`, the Lebesgue density of `ω^n` for `g = I`.
pub fn volume_constant(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 8.0,
        _ => unreachable!("n is validated to be 1 or 2"),
    }
}
