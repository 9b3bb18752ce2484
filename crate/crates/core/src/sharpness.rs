//! Radial sharpness profiles on the `C^n` chart.
//!
//! The potential `φ_δ = (|z|² + δ)^a` has relative volume form
//! `F(ρ) = n log a + log(aρ + δ) - (n - an + 1) log(ρ + δ)` with `ρ = |z|²`,
//! and `|∇F|² = ρ F'(ρ)²`. All quantities are evaluated on the inner ball
//! `|z| < ζ`.

use serde::{Deserialize, Serialize};

use crate::error::{KglError, Result};
use crate::quadrature::{integrate_adaptive, integrate_composite, QuadSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub a: f64,
    pub delta: f64,
    pub n: usize,
    pub zeta: f64,
    pub p: f64,
}

impl RadialProfile {
    /// Profile with `ζ` from [`matching_radius`].
    pub fn new(a: f64, delta: f64, n: usize, p: f64) -> Result<Self> {
        let zeta = matching_radius(a)?;
        let profile = Self { a, delta, n, zeta, p };
        profile.validate()?;
        Ok(profile)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(KglError::InvalidArgument(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(0.0..=0.01).contains(&self.delta) {
            return Err(KglError::InvalidArgument(format!("δ must lie in [0, 1/100], got {}", self.delta)));
        }
        if !(1..=8).contains(&self.n) {
            return Err(KglError::InvalidArgument(format!("unsupported dimension {}", self.n)));
        }
        if !(self.zeta > 0.0 && self.p > 0.0) {
            return Err(KglError::InvalidArgument("ζ and p must be positive".into()));
        }
        Ok(())
    }

    pub fn f(&self, rho: f64) -> f64 {
        let (a, d, n) = (self.a, self.delta, self.n as f64);
        n * a.ln() + (a * rho + d).ln() - (n - a * n + 1.0) * (rho + d).ln()
    }

    pub fn f_prime(&self, rho: f64) -> f64 {
        let (a, d, n) = (self.a, self.delta, self.n as f64);
        a / (a * rho + d) - (n - a * n + 1.0) / (rho + d)
    }

    /// `|∇F|^p e^F` at `ρ`.
    pub fn budget_density(&self, rho: f64) -> f64 {
        let fp = self.f_prime(rho);
        (rho * fp * fp).powf(0.5 * self.p) * self.f(rho).exp()
    }

    /// `|∇φ_δ| = a (ρ + δ)^{a-1} √ρ`.
    pub fn grad_phi(&self, rho: f64) -> f64 {
        self.a * (rho + self.delta).powf(self.a - 1.0) * rho.sqrt()
    }

    /// `tr i∂∂̄φ_δ = a [n + (a - 1) ρ/(ρ + δ)] / (ρ + δ)^{1-a}`.
    pub fn trace_hessian(&self, rho: f64) -> f64 {
        let (a, d, n) = (self.a, self.delta, self.n as f64);
        a * (n + (a - 1.0) * rho / (rho + d)) * (rho + d).powf(a - 1.0)
    }

    /// `2an - p`; positive exactly in the integrable regime.
    pub fn integrability_margin(&self) -> f64 {
        2.0 * self.a * self.n as f64 - self.p
    }
}

/// Half of the radius at which `(r²)^a = 2 log(1 + r²)`.
pub fn matching_radius(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(KglError::InvalidArgument(format!("a must lie in (0, 1), got {a}")));
    }
    // g(r) = a log r² - log(2 log(1 + r²)) is positive near 0 and negative at 1
    let g = |r: f64| a * (r * r).ln() - (2.0 * (1.0 + r * r).ln()).ln();
    let (mut lo, mut hi) = (1e-12, 1.0);
    if g(lo) <= 0.0 || g(hi) >= 0.0 {
        return Err(KglError::InvalidArgument(format!("no branch crossing in (0, 1) for a = {a}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.25 * (lo + hi))
}

/// Euclidean volume factor: `dV = π^n/(n-1)! ρ^{n-1} dρ`.
fn radial_measure(n: usize) -> f64 {
    let fact: f64 = (1..n).map(|k| k as f64).product();
    std::f64::consts::PI.powi(n as i32) / fact
}

/// Exact value of the budget at `δ = 0`:
/// `c_n a^{n+1} (n - an)^p (ζ²)^e / e` with `e = an - p/2`.
pub fn budget_limit(profile: &RadialProfile) -> Result<f64> {
    let (a, n, p) = (profile.a, profile.n as f64, profile.p);
    let e = a * n - 0.5 * p;
    if e <= 0.0 {
        return Err(KglError::InvalidArgument(format!("budget diverges at δ = 0 (2an - p = {})", 2.0 * e)));
    }
    let z2 = profile.zeta * profile.zeta;
    Ok(radial_measure(profile.n) * a.powf(n + 1.0) * (n - a * n).powf(p) * z2.powf(e) / e)
}

/// `I_p(δ) = ∫_{|z|<ζ} |∇F|^p e^F dV`, integrated adaptively in `log ρ`.
pub fn radial_budget(profile: &RadialProfile) -> Result<f64> {
    budget_adaptive(profile, &QuadSettings::default())
}

fn log_bounds(profile: &RadialProfile) -> (f64, f64, f64) {
    let z2 = profile.zeta * profile.zeta;
    let lo = if profile.delta > 0.0 {
        profile.delta.min(z2) * 1e-12
    } else {
        z2 * 1e-12
    };
    (lo, z2, local_exponent(profile))
}

/// Power `k` with integrand `≈ c ρ^k` (in `dρ`) as `ρ → 0`.
fn local_exponent(profile: &RadialProfile) -> f64 {
    let n = profile.n as f64;
    if profile.delta > 0.0 {
        0.5 * profile.p + n - 1.0
    } else {
        profile.a * n - 0.5 * profile.p - 1.0
    }
}

fn integrand_log(profile: &RadialProfile, s: f64) -> f64 {
    let rho = s.exp();
    profile.budget_density(rho) * rho.powi(profile.n as i32 - 1) * rho
}

pub fn budget_adaptive(profile: &RadialProfile, settings: &QuadSettings) -> Result<f64> {
    profile.validate()?;
    let (lo, hi, k) = log_bounds(profile);
    if k <= -1.0 {
        return Err(KglError::QuadratureFailure { lo: 0.0, hi, error: f64::INFINITY });
    }
    let breaks = if profile.delta > 0.0 && profile.delta < hi {
        vec![profile.delta.ln()]
    } else {
        Vec::new()
    };
    let (value, _) = integrate_adaptive(|s| integrand_log(profile, s), lo.ln(), hi.ln(), &breaks, settings)?;
    // power-law tail on [0, lo]
    let tail = integrand_log(profile, lo.ln()) / (k + 1.0);
    Ok(radial_measure(profile.n) * (value + tail))
}

/// Composite rule with `panels` equal panels in `log ρ`.
pub fn budget_composite(profile: &RadialProfile, panels: usize) -> f64 {
    let (lo, hi, k) = log_bounds(profile);
    let value = integrate_composite(|s| integrand_log(profile, s), lo.ln(), hi.ln(), panels);
    let tail = integrand_log(profile, lo.ln()) / (k + 1.0);
    radial_measure(profile.n) * (value + tail)
}

/// `sup_{ρ ≤ ζ²} |∇φ_δ|`, attained at `ρ* = δ/(1 - 2a)` when that lies inside.
pub fn sup_grad(profile: &RadialProfile) -> f64 {
    let z2 = profile.zeta * profile.zeta;
    let edge = profile.grad_phi(z2);
    if profile.a < 0.5 {
        let star = profile.delta / (1.0 - 2.0 * profile.a);
        if star < z2 {
            return profile.grad_phi(star).max(edge);
        }
    }
    edge
}

/// Least-squares line through `(log x, log y)` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> SlopeFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> SlopeFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// One row of the δ-sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub i_p: f64,
    pub sup_grad: f64,
    pub grad_at_delta: f64,
    pub trace_at_delta: f64,
}

pub fn sweep_row(profile: &RadialProfile) -> Result<SweepRow> {
    Ok(SweepRow {
        a: profile.a,
        n: profile.n,
        p: profile.p,
        delta: profile.delta,
        i_p: radial_budget(profile)?,
        sup_grad: sup_grad(profile),
        grad_at_delta: profile.grad_phi(profile.delta),
        trace_at_delta: profile.trace_hessian(profile.delta),
    })
}

/// Result of a blowup fit over a δ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSummary {
    pub rows: Vec<SweepRow>,
    pub fit: SlopeFit,
    pub expected_slope: f64,
    /// `(max - min) / min` of `I_p` over the sweep.
    pub budget_variation: f64,
    /// `I_p` at `δ = 0` when finite.
    pub budget_limit: Option<f64>,
}

fn summarize(profile: &RadialProfile, deltas: &[f64], pick: fn(&SweepRow) -> f64, expected: f64) -> Result<BlowupSummary> {
    let rows = deltas
        .iter()
        .map(|&d| sweep_row(&profile.with_delta(d)))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = rows.iter().map(pick).collect();
    let fit = loglog_fit(deltas, &ys);
    let ip: Vec<f64> = rows.iter().map(|r| r.i_p).collect();
    let lo = ip.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ip.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BlowupSummary {
        rows,
        fit,
        expected_slope: expected,
        budget_variation: (hi - lo) / lo,
        budget_limit: budget_limit(profile).ok(),
    })
}

/// Fit of `log sup|∇φ_δ|` against `log δ`; the expected slope is `a - 1/2`.
pub fn gradient_blowup(profile: &RadialProfile, deltas: &[f64]) -> Result<BlowupSummary> {
    summarize(profile, deltas, |r| r.sup_grad, profile.a - 0.5)
}

/// Fit of `log tr i∂∂̄φ_δ |_{ρ=δ}` against `log δ`; the expected slope is `a - 1`.
pub fn trace_blowup(profile: &RadialProfile, deltas: &[f64]) -> Result<BlowupSummary> {
    summarize(profile, deltas, |r| r.trace_at_delta, profile.a - 1.0)
}

/// Logarithmically spaced values from `hi` down to `lo`.
pub fn log_sweep(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    let (a, b) = (hi.ln(), lo.ln());
    (0..count)
        .map(|k| match k {
            0 => hi,
            k if k + 1 == count => lo,
            k => (a + (b - a) * k as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Fits `I(δ) = I_0 - C δ^e` with known `e` and returns `I_0`.
pub fn extrapolate_limit(deltas: &[f64], values: &[f64], exponent: f64) -> f64 {
    let x: Vec<f64> = deltas.iter().map(|d| d.powf(exponent)).collect();
    linear_fit(&x, values).intercept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_radius_values() {
        let z = matching_radius(0.4).unwrap();
        let r = 2.0 * z;
        assert!(((r * r).powf(0.4) - 2.0 * (1.0 + r * r).ln()).abs() < 1e-10);
        // for a = 0.9 the crossing satisfies r^{-0.2} ≈ 2 to leading order
        let r = 2.0 * matching_radius(0.9).unwrap();
        assert!((r - 0.031_25).abs() < 1e-3);
    }

    #[test]
    fn derivative_matches_difference() {
        let p = RadialProfile::new(0.4, 1e-3, 2, 1.5).unwrap();
        for rho in [1e-5, 1e-3, 0.05] {
            let h = rho * 1e-6;
            let fd = (p.f(rho + h) - p.f(rho - h)) / (2.0 * h);
            assert!((fd / p.f_prime(rho) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_zero_quadrature_matches_closed_form() {
        for (a, p) in [(0.4, 1.5), (0.9, 3.0)] {
            let prof = RadialProfile::new(a, 0.0, 2, p).unwrap();
            let q = radial_budget(&prof).unwrap();
            let exact = budget_limit(&prof).unwrap();
            assert!((q / exact - 1.0).abs() < 1e-8, "{q} vs {exact}");
        }
    }

    #[test]
    fn sup_grad_at_interior_max() {
        let p = RadialProfile::new(0.4, 1e-4, 2, 1.5).unwrap();
        let s = sup_grad(&p);
        let z2 = p.zeta * p.zeta;
        let brute = (0..20000)
            .map(|k| p.grad_phi(z2 * k as f64 / 20000.0))
            .fold(0.0, f64::max);
        assert!(s >= brute && s <= brute * 1.001);
    }
}
