//! Periodic lattices over the flat torus `C^n / (Z + iZ)^n`.
//!
//! Real axes are ordered `(x_1, y_1, ..., x_n, y_n)` and flattened in
//! row-major order, so the last axis (`y_n`) is the fastest-varying one.

use serde::{Deserialize, Serialize};

use crate::error::{KglError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    m: usize,
}

impl GridSpec {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(KglError::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {n}"
            )));
        }
        if m < 8 || !m.is_power_of_two() {
            return Err(KglError::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {m}"
            )));
        }
        Ok(Self { n, m })
    }

    /// Complex dimension.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Points per real axis.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of real axes.
    #[inline]
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Euclidean cell volume `h^{2n}`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.dim() - 1 - axis) as u32)
    }

    /// Lattice coordinate of `index` along `axis`.
    #[inline]
    pub fn coord(&self, index: usize, axis: usize) -> usize {
        (index / self.stride(axis)) % self.m
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.coord(index, a)).collect()
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim());
        coords.iter().fold(0, |acc, &c| acc * self.m + (c % self.m))
    }

    /// Neighbour of `index` displaced by `offset` along `axis`, wrapping periodically.
    #[inline]
    pub fn shift(&self, index: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let c = (index / stride) % self.m;
        let m = self.m as isize;
        let target = ((c as isize + offset) % m + m) % m;
        index - c * stride + target as usize * stride
    }

    /// Real coordinates in `[0, 1)^{2n}` of a node.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let h = self.h();
        (0..self.dim())
            .map(|a| self.coord(index, a) as f64 * h)
            .collect()
    }

    /// Periodic Euclidean distance between two nodes in real coordinates.
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let h = self.h();
        (0..self.dim())
            .map(|axis| {
                let d = self.coord(a, axis).abs_diff(self.coord(b, axis));
                let d = d.min(self.m - d) as f64 * h;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Grid with the same dimension and `m` doubled.
    pub fn refined(&self) -> Self {
        Self {
            n: self.n,
            m: self.m * 2,
        }
    }
}
