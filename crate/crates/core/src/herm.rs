//! Small Hermitian matrices (complex dimension 1 or 2).

use num_complex::Complex64;

/// Hermitian `n x n` matrix with `n <= 2`.
///
/// Stores the diagonal and the `(1, 2)` entry; the `(2, 1)` entry is its
/// conjugate, so Hermiticity holds by construction. For `n = 1` only
/// `diag[0]` is meaningful and the other slots stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Herm {
    pub diag: [f64; 2],
    pub off: Complex64,
}

impl Herm {
    pub const ZERO: Herm = Herm {
        diag: [0.0; 2],
        off: Complex64::new(0.0, 0.0),
    };

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        let mut h = Self::ZERO;
        for i in 0..n {
            h.diag[i] = s;
        }
        h
    }

    pub fn diagonal(n: usize, d: &[f64]) -> Self {
        let mut h = Self::ZERO;
        h.diag[..n].copy_from_slice(&d[..n]);
        h
    }

    /// Entry `(i, j)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match (i, j) {
            (0, 0) => Complex64::new(self.diag[0], 0.0),
            (1, 1) => Complex64::new(self.diag[1], 0.0),
            (0, 1) => self.off,
            (1, 0) => self.off.conj(),
            _ => panic!("index ({i}, {j}) out of range"),
        }
    }

    #[inline]
    pub fn trace(&self, n: usize) -> f64 {
        self.diag[..n].iter().sum()
    }

    #[inline]
    pub fn det(&self, n: usize) -> f64 {
        if n == 1 {
            self.diag[0]
        } else {
            self.diag[0] * self.diag[1] - self.off.norm_sqr()
        }
    }

    /// Inverse; the caller guarantees positive definiteness.
    #[inline]
    pub fn inverse(&self, n: usize) -> Self {
        if n == 1 {
            Herm {
                diag: [1.0 / self.diag[0], 0.0],
                off: Complex64::new(0.0, 0.0),
            }
        } else {
            let d = self.det(2);
            Herm {
                diag: [self.diag[1] / d, self.diag[0] / d],
                off: -self.off / d,
            }
        }
    }

    #[inline]
    pub fn min_eig(&self, n: usize) -> f64 {
        if n == 1 {
            self.diag[0]
        } else {
            let mean = 0.5 * (self.diag[0] + self.diag[1]);
            let half_gap = 0.5 * (self.diag[0] - self.diag[1]);
            mean - (half_gap * half_gap + self.off.norm_sqr()).sqrt()
        }
    }

    #[inline]
    pub fn max_eig(&self, n: usize) -> f64 {
        if n == 1 {
            self.diag[0]
        } else {
            let mean = 0.5 * (self.diag[0] + self.diag[1]);
            let half_gap = 0.5 * (self.diag[0] - self.diag[1]);
            mean + (half_gap * half_gap + self.off.norm_sqr()).sqrt()
        }
    }

    #[inline]
    pub fn add(&self, other: &Herm) -> Herm {
        Herm {
            diag: [self.diag[0] + other.diag[0], self.diag[1] + other.diag[1]],
            off: self.off + other.off,
        }
    }

    #[inline]
    pub fn sub(&self, other: &Herm) -> Herm {
        Herm {
            diag: [self.diag[0] - other.diag[0], self.diag[1] - other.diag[1]],
            off: self.off - other.off,
        }
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Herm {
        Herm {
            diag: [self.diag[0] * s, self.diag[1] * s],
            off: self.off * s,
        }
    }

    /// `tr(self * other)` for Hermitian `self`, `other` (always real).
    #[inline]
    pub fn trace_product(&self, other: &Herm, n: usize) -> f64 {
        let mut t = self.diag[0] * other.diag[0];
        if n == 2 {
            t += self.diag[1] * other.diag[1];
            // off-diagonal contributions: a_12 b_21 + a_21 b_12 = 2 Re(a_12 conj(b_12))
            t += 2.0 * (self.off * other.off.conj()).re;
        }
        t
    }

    /// `v^H self v`.
    #[inline]
    pub fn quad_form(&self, v: &[Complex64], n: usize) -> f64 {
        let mut s = self.diag[0] * v[0].norm_sqr();
        if n == 2 {
            s += self.diag[1] * v[1].norm_sqr();
            s += 2.0 * (v[0].conj() * self.off * v[1]).re;
        }
        s
    }

    /// Real `2n x 2n` symmetric matrix `A` with
    /// `Re(a^H self b) = w_a^T A w_b` where `a = (∂_i u)`, `b = (∂_i v)`,
    /// `∂_i = (∂_{x_i} - i ∂_{y_i}) / 2`, and `w` is the real gradient in
    /// interleaved `(x_1, y_1, x_2, y_2)` order. Returned row-major in a
    /// `4 x 4` buffer; only the leading `2n x 2n` block is filled.
    pub fn real_form(&self, n: usize) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for i in 0..n {
            for j in 0..n {
                let p = self.get(i, j);
                let (r, s) = (p.re, p.im);
                a[2 * i][2 * j] = 0.25 * r;
                a[2 * i + 1][2 * j + 1] = 0.25 * r;
                a[2 * i][2 * j + 1] = 0.25 * s;
                a[2 * i + 1][2 * j] = -0.25 * s;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Herm {
        Herm {
            diag: [2.0, 3.0],
            off: Complex64::new(0.5, -0.7),
        }
    }

    #[test]
    fn inverse_and_det() {
        let g = sample();
        let inv = g.inverse(2);
        // g * inv = I  <=> tr(g inv) = 2 and off-diagonal vanishes
        let p01 = g.get(0, 0) * inv.get(0, 1) + g.get(0, 1) * inv.get(1, 1);
        assert!(p01.norm() < 1e-15);
        assert!((g.trace_product(&inv, 2) - 2.0).abs() < 1e-14);
        assert!((g.det(2) - (6.0 - 0.74)).abs() < 1e-14);
    }

    #[test]
    fn eigen_bounds() {
        let g = sample();
        let lo = g.min_eig(2);
        let hi = g.max_eig(2);
        assert!((lo + hi - g.trace(2)).abs() < 1e-14);
        assert!((lo * hi - g.det(2)).abs() < 1e-13);
    }

    #[test]
    fn real_form_matches_complex_pairing() {
        let p = sample().inverse(2);
        let w_u = [0.3, -1.1, 0.7, 0.2];
        let w_v = [-0.4, 0.9, 1.5, -0.6];
        let grad = |w: &[f64; 4]| {
            [
                Complex64::new(0.5 * w[0], -0.5 * w[1]),
                Complex64::new(0.5 * w[2], -0.5 * w[3]),
            ]
        };
        let a = grad(&w_u);
        let b = grad(&w_v);
        let mut complex = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                complex += a[i].conj() * p.get(i, j) * b[j];
            }
        }
        let ar = p.real_form(2);
        let mut real = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                real += w_u[r] * ar[r][c] * w_v[c];
            }
            for c in 0..4 {
                assert!((ar[r][c] - ar[c][r]).abs() < 1e-15);
            }
        }
        assert!((complex.re - real).abs() < 1e-14);
        assert!((p.quad_form(&a, 2) - {
            let mut s = 0.0;
            for r in 0..4 {
                for c in 0..4 {
                    s += w_u[r] * ar[r][c] * w_u[c];
                }
            }
            s
        })
        .abs()
            < 1e-14);
    }
}
