//! Measured checks: each one evaluates both sides of an estimate on the grid
//! and reports the margin. Non-constructive constants are replaced by
//! uniformity ratios over a sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{KglError, Result};
use crate::field::{det_sum, ScalarField};
use crate::functionals::{levelset_mass, ClassMembership};
use crate::geometry::{centred_gradient_normsq, integrate, metric_gradient_normsq, ricci_and_scalar, BackgroundGeometry};
use crate::green::{GreenField, LaplacianOperator};
use crate::ma::MASolution;
use crate::sharpness::loglog_fit;

/// Default sweep-uniformity factor (max over median).
pub const UNIFORMITY_FACTOR: f64 = 3.0;

/// Allowed relative drift of a budget meant to be held fixed.
pub const BUDGET_DRIFT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub coordinates: BTreeMap<String, f64>,
    pub measured: BTreeMap<String, f64>,
    /// Value compared against `bound`.
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub note: String,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, value: f64, bound: f64, tolerance: f64) -> Self {
        let margin = bound - value;
        Self {
            name: name.into(),
            coordinates: BTreeMap::new(),
            measured: BTreeMap::new(),
            value,
            bound,
            margin,
            pass: margin >= -tolerance,
            tolerance,
            note: String::new(),
        }
    }

    pub fn with_coordinate(mut self, key: &str, value: f64) -> Self {
        self.coordinates.insert(key.to_owned(), value);
        self
    }

    pub fn with_coordinates(mut self, coords: &BTreeMap<String, f64>) -> Self {
        self.coordinates.extend(coords.iter().map(|(k, v)| (k.clone(), *v)));
        self
    }

    pub fn with_measured(mut self, key: &str, value: f64) -> Self {
        self.measured.insert(key.to_owned(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// `max / median` of a series; 1 for an empty or all-zero series.
pub fn uniformity_ratio(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let max = sorted[k - 1];
    if max == 0.0 && median == 0.0 {
        1.0
    } else {
        max / median
    }
}

/// `(max - min) / min`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        0.0
    } else {
        (hi - lo) / lo
    }
}

/// Lower chain `‖G‖_1 / (2 V_t) ≤ -inf G`, exact for mean-zero `G`.
///
/// Also records `ρ = (-inf G)/(1 + ‖G‖_1)` for sweep aggregation.
pub fn check_lower_chain(green: &GreenField, op: &LaplacianOperator) -> VerificationReport {
    let l1 = integrate(&green.g.map(f64::abs), op.metric());
    let vt = op.volume();
    let lhs = l1 / (2.0 * vt);
    let tol = 1e-9 * green.c_l.abs().max(1.0);
    VerificationReport::new("lower_chain", lhs, green.c_l, tol)
        .with_coordinate("source", green.source as f64)
        .with_measured("l1", l1)
        .with_measured("neg_inf", green.c_l)
        .with_measured("volume", vt)
        .with_measured("ratio", green.c_l / (1.0 + l1))
}

/// Exponents `(q, s)` of the `L^q` and gradient `L^s` bounds.
///
/// For `n = 1` the `L^q` bound holds for every finite `q`; `q = 3` is used.
pub fn integrability_exponents(n: usize, delta: f64) -> (f64, f64) {
    let nf = n as f64;
    let q = if n == 1 { 3.0 } else { nf / (nf - 1.0) - delta };
    let s = 2.0 * nf / (2.0 * nf - 1.0) - delta;
    (q, s)
}

/// Green quantities of one metric, maximized over sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenQuantities {
    pub l1: f64,
    pub neg_inf: f64,
    pub lq: f64,
    pub grad_ls: f64,
    pub q: f64,
    pub s: f64,
}

impl GreenQuantities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.l1, self.neg_inf, self.lq, self.grad_ls]
    }

    pub const NAMES: [&'static str; 4] = ["l1", "neg_inf", "lq", "grad_ls"];
}

pub fn green_quantities(greens: &[GreenField], op: &LaplacianOperator, delta: f64) -> GreenQuantities {
    let (q, s) = integrability_exponents(op.grid().n(), delta);
    let mut out = GreenQuantities {
        l1: 0.0,
        neg_inf: 0.0,
        lq: 0.0,
        grad_ls: 0.0,
        q,
        s,
    };
    for gf in greens {
        out.l1 = out.l1.max(integrate(&gf.g.map(f64::abs), op.metric()));
        out.neg_inf = out.neg_inf.max(gf.c_l);
        out.lq = out.lq.max(integrate(&gf.g.map(|v| v.abs().powf(q)), op.metric()));
        out.grad_ls = out.grad_ls.max(integrate(&gf.gradnorm.map(|v| v.powf(s)), op.metric()));
    }
    out
}

/// Which class a sweep is declared to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricClass {
    Entropy,
    MPrime,
    MDoublePrime,
    MTilde,
}

impl MetricClass {
    pub fn contains(&self, m: &ClassMembership) -> bool {
        match self {
            Self::Entropy => m.in_entropy_class,
            Self::MPrime => m.in_m_prime,
            Self::MDoublePrime => m.in_m_double_prime,
            Self::MTilde => m.in_m_tilde,
        }
    }
}

/// One sweep member of the uniformity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub coordinates: BTreeMap<String, f64>,
    pub quantities: GreenQuantities,
    pub class: ClassMembership,
}

/// Uniformity of the Green quantities across a sweep: for each quantity,
/// max over median must not exceed `factor`.
pub fn check_green_uniformity(members: &[SweepMember], class: MetricClass, factor: f64) -> Result<Vec<VerificationReport>> {
    for m in members {
        if !class.contains(&m.class) {
            return Err(KglError::ClassViolation(format!(
                "{class:?} violated at {:?} (moment {:.4}, sup e^-F {:.4})",
                m.coordinates, m.class.exp_moment, m.class.sup_exp_neg_f
            )));
        }
    }
    let mut out = Vec::new();
    for (k, name) in GreenQuantities::NAMES.iter().enumerate() {
        let series: Vec<f64> = members.iter().map(|m| m.quantities.as_array()[k]).collect();
        let mut report = VerificationReport::new(format!("uniformity_{name}"), uniformity_ratio(&series), factor, 0.0)
            .with_note("sweep uniformity: max over median of the raw series");
        for (j, v) in series.iter().enumerate() {
            report = report.with_measured(&format!("member{j}"), *v);
        }
        if let Some(m) = members.first() {
            report = report.with_measured("q", m.quantities.q).with_measured("s", m.quantities.s);
        }
        out.push(report);
    }
    Ok(out)
}

/// `∫ |∇𝒢|² 𝒢^{-1-β} ω^n` for the shifted Green function `𝒢 = G + C_l + 1`,
/// with the centred pointwise gradient.
pub fn gradient_identity_value(green: &GreenField, op: &LaplacianOperator, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(KglError::InvalidArgument(format!("β must be positive, got {beta}")));
    }
    let g2 = centred_gradient_normsq(&green.positive, op.metric())?;
    let w = g2.zip_map(&green.positive, |a, g| a * g.powf(-1.0 - beta));
    Ok(integrate(&w, op.metric()))
}

pub fn check_gradient_identity(
    green: &GreenField,
    op: &LaplacianOperator,
    beta: f64,
    tol_disc: f64,
) -> Result<VerificationReport> {
    let value = gradient_identity_value(green, op, beta)?;
    Ok(
        VerificationReport::new("gradient_identity", value, (1.0 + tol_disc) / beta, 0.0)
            .with_coordinate("beta", beta)
            .with_coordinate("source", green.source as f64)
            .with_measured("beta_times_value", beta * value),
    )
}

/// Fitted level-set recursion `r φ(s + r) ≤ C₆ φ(s)^{1+δ₀}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiFit {
    pub levels: Vec<f64>,
    pub masses: Vec<f64>,
    pub c6: f64,
    pub delta0: f64,
    pub volume: f64,
    pub s0: f64,
    pub s_infinity: f64,
    pub sup_v: f64,
}

impl DeGiorgiFit {
    pub fn pass(&self) -> bool {
        self.sup_v <= self.s_infinity
    }

    pub fn report(&self) -> VerificationReport {
        VerificationReport::new("degiorgi", self.sup_v, self.s_infinity, 0.0)
            .with_measured("c6", self.c6)
            .with_measured("delta0", self.delta0)
            .with_measured("s0", self.s0)
    }
}

/// `δ₀ = (p - n)/(np)`.
pub fn degiorgi_exponent(p: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(p > nf) {
        return Err(KglError::InvalidArgument(format!("p = {p} must exceed n = {n}")));
    }
    Ok((p - nf) / (nf * p))
}

/// `(s₀, S_∞)` for a recursion constant. `C₆` is raised to at least `1/2`,
/// which keeps the recursion valid and makes `S_∞` nonincreasing in `δ₀`.
pub fn degiorgi_bound(c6: f64, delta0: f64, volume: f64) -> (f64, f64) {
    let c = c6.max(0.5);
    let s0 = (2.0 * c).powf(1.0 / delta0) * volume;
    (s0, s0 + 1.0 / (1.0 - (-delta0).exp2()))
}

/// Levels for the recursion scan: a geometric ladder below `top` plus a
/// uniform grid on `[0, top]`.
fn level_grid(top: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (0..=256).map(|k| top * k as f64 / 256.0).collect();
    s.extend((1..=30).map(|k| top * (-(k as f64)).exp2()));
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Fits `C₆` for `v` (normalized by [`degiorgi_normalize`]) and checks
/// `sup v ≤ S_∞`.
pub fn check_degiorgi(v: &ScalarField, f: &ScalarField, background: &BackgroundGeometry, p: f64) -> Result<DeGiorgiFit> {
    let delta0 = degiorgi_exponent(p, background.n())?;
    let omega_x = background.omega_x_field();
    let sup_v = v.max();
    let levels = if sup_v > 0.0 { level_grid(sup_v) } else { vec![0.0] };
    let masses: Vec<f64> = levels.iter().map(|&s| levelset_mass(v, f, s, &omega_x).0).collect();
    let mut c6: f64 = 0.0;
    for i in 0..levels.len() {
        if masses[i] <= 0.0 {
            continue;
        }
        let denom = masses[i].powf(1.0 + delta0);
        for j in i + 1..levels.len() {
            let r = levels[j] - levels[i];
            c6 = c6.max(r * masses[j] / denom);
        }
    }
    if !c6.is_finite() {
        return Err(KglError::RecursionViolated(format!("C6 = {c6}")));
    }
    let volume = background.volume();
    let (s0, s_infinity) = degiorgi_bound(c6, delta0, volume);
    Ok(DeGiorgiFit {
        levels,
        masses,
        c6,
        delta0,
        volume,
        s0,
        s_infinity,
        sup_v,
    })
}

/// Rescales a mean-zero `v` so that `‖v‖_{L¹(ω_t^n)} ≤ V_t`.
pub fn degiorgi_normalize(v: &ScalarField, op: &LaplacianOperator) -> ScalarField {
    let avg = op.average(v.values());
    let centred = v.map(|x| x - avg);
    let l1 = integrate(&centred.map(f64::abs), op.metric());
    let vt = op.volume();
    if l1 > vt {
        centred.map(|x| x * vt / l1)
    } else {
        centred
    }
}

/// Hölder exponent `p/(p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `sup |u - avg u| ≤ C ‖∇u‖_{L^p}` with `C = max_x ‖∇G(x,·)‖_{L^{p*}}`.
pub fn check_sobolev_morrey(
    greens: &[GreenField],
    op: &LaplacianOperator,
    samples: &[ScalarField],
    p: f64,
) -> Result<Vec<VerificationReport>> {
    let n = op.grid().n();
    if !(p > 2.0 * n as f64) {
        return Err(KglError::InvalidArgument(format!("p = {p} must exceed 2n = {}", 2 * n)));
    }
    let pstar = conjugate_exponent(p);
    let c = greens
        .iter()
        .map(|gf| integrate(&gf.gradnorm.map(|v| v.powf(pstar)), op.metric()).powf(1.0 / pstar))
        .fold(0.0, f64::max);
    samples
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let avg = op.average(u.values());
            let lhs = u.map(|x| (x - avg).abs()).max();
            let g = metric_gradient_normsq(u, op.metric())?;
            let lp = integrate(&g.map(|v| v.powf(0.5 * p)), op.metric()).powf(1.0 / p);
            let rhs = c * lp;
            Ok(VerificationReport::new("sobolev_morrey", lhs, rhs, 1e-12 * rhs.max(1.0))
                .with_coordinate("sample", k as f64)
                .with_coordinate("p", p)
                .with_measured("witnessed_c", c)
                .with_measured("grad_lp", lp)
                .with_measured("conjugate_exponent", pstar))
        })
        .collect()
}

/// `(A + κ/n)^{-n} e^{-A osc φ}` with `A = 1`.
pub fn curvature_floor(kappa: f64, n: usize, oscillation: f64) -> f64 {
    let a = 1.0;
    let nf = n as f64;
    (a + kappa / nf).powf(-nf) * (-a * oscillation).exp()
}

/// Floor `inf e^F ≥ (A + κ/n)^{-n} e^{-A osc φ}` in the fixed class, with
/// `A = 1` and `κ = -min R`.
pub fn check_curvature_floor(solution: &MASolution, f: &ScalarField, n: usize) -> Result<VerificationReport> {
    let (_, r) = ricci_and_scalar(&solution.metric)?;
    let kappa = (-r.min()).max(0.0);
    let floor = curvature_floor(kappa, n, solution.phi.oscillation());
    let inf_ef = f.map(f64::exp).min();
    Ok(VerificationReport::new("curvature_floor", floor, inf_ef, 1e-6)
        .with_measured("kappa", kappa)
        .with_measured("inf_exp_f", inf_ef)
        .with_measured("osc_phi", solution.phi.oscillation())
        .with_measured("gamma", 1.0 / inf_ef))
}

/// Measured sweep member for the a priori estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriMember {
    pub coordinates: BTreeMap<String, f64>,
    /// `‖∇F‖_{L^p(e^F ω_X^n)}`.
    pub budget: f64,
    pub sup_h: f64,
    pub sup_q: f64,
    pub sup_s: f64,
}

/// Stability of `sup H`, `sup Q` and `sup |S|²` while the budget is held fixed.
pub fn check_apriori_sweeps(members: &[AprioriMember], factor: f64) -> Result<Vec<VerificationReport>> {
    let budgets: Vec<f64> = members.iter().map(|m| m.budget).collect();
    let drift = relative_spread(&budgets);
    if drift > BUDGET_DRIFT {
        return Err(KglError::BudgetDrift {
            drift,
            allowed: BUDGET_DRIFT,
        });
    }
    let series: [(&str, Vec<f64>); 3] = [
        ("sup_h", members.iter().map(|m| m.sup_h).collect()),
        ("sup_q", members.iter().map(|m| m.sup_q).collect()),
        ("sup_s", members.iter().map(|m| m.sup_s).collect()),
    ];
    Ok(series
        .iter()
        .map(|(name, s)| {
            let mut r = VerificationReport::new(format!("apriori_{name}"), uniformity_ratio(s), factor, 0.0)
                .with_measured("budget_drift", drift)
                .with_note("sweep uniformity: max over median of the raw series");
            for (j, v) in s.iter().enumerate() {
                r = r.with_measured(&format!("member{j}"), *v);
            }
            r
        })
        .collect())
}

/// Growth exponent `γ` in `value ~ param^{-γ}` fitted over a sweep.
pub fn blowup_exponent(params: &[f64], values: &[f64]) -> f64 {
    -loglog_fit(params, values).slope
}

/// `max_x |u(x) - avg u - Σ G(x,·) K u|` as a report against `factor × tol × osc u`.
pub fn check_representation(
    op: &LaplacianOperator,
    greens: &[GreenField],
    u: &ScalarField,
    solver_tol: f64,
    factor: f64,
) -> VerificationReport {
    let resid = crate::green::representation_check(op, greens, u);
    VerificationReport::new("representation", resid, factor * solver_tol * u.oscillation(), 0.0)
        .with_measured("oscillation", u.oscillation())
}

/// Mean of `G` against the metric volume.
pub fn green_mean(green: &GreenField, op: &LaplacianOperator) -> f64 {
    let g = green.g.values();
    let m = op.masses();
    det_sum(g.len(), |i| g[i] * m[i])
}
