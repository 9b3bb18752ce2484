//! Integral functionals, class predicates and the pointwise quantities that
//! enter the gradient, second-order and third-order estimates.
//!
//! Pointwise gradients here use centred differences; only quantities that must
//! pair exactly with the stiffness form use the forward-difference gradient.

use serde::{Deserialize, Serialize};

use crate::error::{KglError, Result};
use crate::field::{det_sum, MetricField, ScalarField};
use crate::geometry::{
    centred_gradient_normsq, christoffel_normsq, complex_hessian_normsq, integrate, metric_gradient_normsq,
    nondivergence_laplacian, BackgroundGeometry,
};
use crate::ma::{MAProblem, MASolution};

/// Parameters `(p, N, ε, γ)` of the metric classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassParams {
    pub p: f64,
    #[serde(rename = "N")]
    pub n_bound: f64,
    #[serde(rename = "epsilon")]
    pub eps: f64,
    pub gamma: f64,
}

impl ClassParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.p > n as f64) {
            return Err(KglError::InvalidArgument(format!("p must exceed n = {n}, got {}", self.p)));
        }
        if !(self.n_bound > 0.0 && self.eps > 0.0 && self.gamma > 0.0) {
            return Err(KglError::InvalidArgument("N, ε and γ must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ClassParams {
    fn default() -> Self {
        Self {
            p: 5.0,
            n_bound: 4.0,
            eps: 0.5,
            gamma: 4.0,
        }
    }
}

/// `(1/V_t) ∫ |F|^p ω_t^n` with `V_t` the discrete volume of `omega_t`.
pub fn entropy_p(f: &ScalarField, omega_t: &MetricField, p: f64) -> f64 {
    integrate(&f.map(|v| v.abs().powf(p)), omega_t) / omega_t.volume()
}

/// `(1/V) ∫ |F|^p e^F ω_X^n`; equals [`entropy_p`] whenever `F` is the
/// relative volume form of `omega_t`.
pub fn entropy_p_reference(f: &ScalarField, omega_x: &MetricField, p: f64) -> f64 {
    integrate(&f.map(|v| v.abs().powf(p) * v.exp()), omega_x) / omega_x.volume()
}

/// Both entropy forms and their relative disagreement.
pub fn entropy_cross_check(f: &ScalarField, omega_t: &MetricField, omega_x: &MetricField, p: f64) -> (f64, f64, f64) {
    let a = entropy_p(f, omega_t, p);
    let b = entropy_p_reference(f, omega_x, p);
    let scale = a.abs().max(b.abs());
    let rel = if scale == 0.0 { 0.0 } else { (a - b).abs() / scale };
    (a, b, rel)
}

/// `(1/V) ∫ e^{(1+ε)F} ω_X^n`.
pub fn exp_moment(f: &ScalarField, omega_x: &MetricField, eps: f64) -> f64 {
    integrate(&f.map(|v| ((1.0 + eps) * v).exp()), omega_x) / omega_x.volume()
}

/// `(1/V) ∫ (e^{-F} + |Δ_{ω_X} e^{-F}|) ω_X^n`.
pub fn laplacian_condition(f: &ScalarField, omega_x: &MetricField) -> f64 {
    let w = f.map(|v| (-v).exp());
    let lap = nondivergence_laplacian(&w, omega_x);
    integrate(&w.zip_map(&lap, |a, b| a + b.abs()), omega_x) / omega_x.volume()
}

/// `(1/V) ∫ (e^{-F} + |∇e^{-F}|²_{ω_X}) ω_X^n`.
pub fn gradient_condition(f: &ScalarField, omega_x: &MetricField) -> Result<f64> {
    let w = f.map(|v| (-v).exp());
    let g = metric_gradient_normsq(&w, omega_x)?;
    Ok(integrate(&w.zip_map(&g, |a, b| a + b), omega_x) / omega_x.volume())
}

/// `(∫ |∇F|^p_{ω_X} e^F ω_X^n)^{1/p}`.
pub fn gradient_lp_budget(f: &ScalarField, omega_x: &MetricField, p: f64) -> Result<f64> {
    let g = centred_gradient_normsq(f, omega_x)?;
    let w = g.zip_map(f, |g, f| g.max(0.0).powf(0.5 * p) * f.exp());
    Ok(integrate(&w, omega_x).powf(1.0 / p))
}

/// `(∫ |i∂∂̄F|^p_{ω_X} e^F ω_X^n)^{1/p}`.
pub fn hessian_lp_budget(f: &ScalarField, omega_x: &MetricField, p: f64) -> Result<f64> {
    let g = complex_hessian_normsq(f, omega_x)?;
    let w = g.zip_map(f, |g, f| g.max(0.0).powf(0.5 * p) * f.exp());
    Ok(integrate(&w, omega_x).powf(1.0 / p))
}

/// Measured class data and membership flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMembership {
    pub entropy_p: f64,
    pub exp_moment: f64,
    pub sup_exp_neg_f: f64,
    pub laplacian_condition: f64,
    pub gradient_condition: f64,
    pub in_entropy_class: bool,
    pub in_m_prime: bool,
    pub in_m_double_prime: bool,
    pub in_m_tilde: bool,
}

/// Evaluates every class condition for `F` against `params`.
///
/// The two integral conditions on `e^{-F}` are normalized by `1/V`, so
/// `F ≡ 0` gives the value 1 in each of them. The fixed-class condition is
/// only satisfied when the background is `χ = ω_X/2`, `t = 1/2`.
pub fn class_measures(f: &ScalarField, background: &BackgroundGeometry, params: &ClassParams) -> Result<ClassMembership> {
    let omega_x = background.omega_x_field();
    let omega_t_density = f.map(|v| v.exp());
    // ω_t^n / V_t = e^F ω_X^n / V lets the entropy be taken against ω_X
    let entropy = integrate(&f.map(|v| v.abs().powf(params.p)).zip_map(&omega_t_density, |a, b| a * b), &omega_x)
        / background.volume();
    let moment = exp_moment(f, &omega_x, params.eps);
    let sup_neg = f.map(|v| (-v).exp()).max();
    let lap = laplacian_condition(f, &omega_x);
    let grad = gradient_condition(f, &omega_x)?;
    let fixed = background.t() == 0.5 && *background.chi() == background.omega_x().scale(0.5);
    Ok(ClassMembership {
        entropy_p: entropy,
        exp_moment: moment,
        sup_exp_neg_f: sup_neg,
        laplacian_condition: lap,
        gradient_condition: grad,
        in_entropy_class: entropy <= params.n_bound,
        in_m_prime: moment <= params.n_bound && sup_neg <= params.gamma,
        in_m_double_prime: moment <= params.n_bound && lap <= params.gamma,
        in_m_tilde: fixed && moment <= params.n_bound && grad <= params.gamma,
    })
}

/// Class membership of a solved problem. The solution's own relative volume
/// form is used, which agrees with the problem `F` up to the solver residual.
pub fn class_membership(problem: &MAProblem, solution: &MASolution, params: &ClassParams) -> Result<ClassMembership> {
    let f = crate::geometry::ma_determinant_ratio(&solution.metric, problem.background())?;
    class_measures(&f, problem.background(), params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseQuantity {
    pub field: ScalarField,
    pub sup: f64,
    /// `∫ q ω_X^n`.
    pub integral_x: f64,
    /// `∫ q^{ε/(1+ε)} ω_t^n`.
    pub integral_eps: f64,
}

fn pointwise(field: ScalarField, omega_x: &MetricField, omega_t: &MetricField, eps: f64) -> PointwiseQuantity {
    let sup = field.max();
    let integral_x = integrate(&field, omega_x);
    let r = eps / (1.0 + eps);
    let integral_eps = integrate(&field.map(|v| v.max(0.0).powf(r)), omega_t);
    PointwiseQuantity {
        field,
        sup,
        integral_x,
        integral_eps,
    }
}

/// `H = e^{-λφ} |∇φ|²_{ω_X}`.
pub fn gradient_quantity_h(
    phi: &ScalarField,
    background: &BackgroundGeometry,
    omega_t: &MetricField,
    lambda: f64,
    eps: f64,
) -> Result<PointwiseQuantity> {
    if lambda < 0.0 {
        return Err(KglError::InvalidArgument(format!("λ must be nonnegative, got {lambda}")));
    }
    let omega_x = background.omega_x_field();
    let g = centred_gradient_normsq(phi, &omega_x)?;
    let h = g.zip_map(phi, |g, p| (-lambda * p).exp() * g);
    Ok(pointwise(h, &omega_x, omega_t, eps))
}

/// `Q = e^{-μφ} tr_{ω_X} ω_t`.
pub fn c2_quantity_q(
    phi: &ScalarField,
    omega_t: &MetricField,
    background: &BackgroundGeometry,
    mu: f64,
    eps: f64,
) -> Result<PointwiseQuantity> {
    if mu < 0.0 {
        return Err(KglError::InvalidArgument(format!("μ must be nonnegative, got {mu}")));
    }
    omega_t.ensure_positive()?;
    let omega_x = background.omega_x_field();
    let tr = omega_t.trace_against(&omega_x);
    let q = tr.zip_map(phi, |t, p| (-mu * p).exp() * t);
    Ok(pointwise(q, &omega_x, omega_t, eps))
}

/// `|S|²_g` with `S = Γ(g) - Γ(g_X)`.
pub fn c3_tensor_normsq(metric: &MetricField, _background: &BackgroundGeometry) -> Result<ScalarField> {
    christoffel_normsq(metric)
}

/// `φ(s) = ∫_{v>s} e^F ω_X^n` and `A_s = (1/V) ∫_{v>s} (v - s) e^F ω_X^n`.
pub fn levelset_mass(v: &ScalarField, f: &ScalarField, s: f64, omega_x: &MetricField) -> (f64, f64) {
    let masses = omega_x.masses();
    let vv = v.values();
    let ff = f.values();
    let phi = det_sum(vv.len(), |i| if vv[i] > s { ff[i].exp() * masses[i] } else { 0.0 });
    let a = det_sum(vv.len(), |i| if vv[i] > s { (vv[i] - s) * ff[i].exp() * masses[i] } else { 0.0 });
    let volume = det_sum(masses.len(), |i| masses[i]);
    (phi, a / volume)
}

/// Both sides of `∫ |∇φ|² ω_X^n ≤ n ∫ (-φ)(e^F - 1) ω_X^n` in the fixed class.
pub fn energy_inequality(phi: &ScalarField, f: &ScalarField, background: &BackgroundGeometry) -> Result<(f64, f64)> {
    let omega_x = background.omega_x_field();
    let lhs = integrate(&metric_gradient_normsq(phi, &omega_x)?, &omega_x);
    let n = background.n() as f64;
    let rhs = n * integrate(&phi.zip_map(f, |p, f| -p * (f.exp() - 1.0)), &omega_x);
    Ok((lhs, rhs))
}

/// Flat summary of every functional, serialized keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub entropy_p: f64,
    pub exp_moment_norm: f64,
    pub sup_exp_neg_f: f64,
    pub laplacian_condition: f64,
    pub gradient_condition: f64,
    pub grad_f_lp: f64,
    pub hess_f_lp: f64,
    pub sup_h: f64,
    pub sup_q: f64,
    pub sup_s: f64,
    pub in_entropy_class: bool,
    pub in_m_prime: bool,
    pub in_m_double_prime: bool,
    pub in_m_tilde: bool,
}

pub fn functional_report(
    problem: &MAProblem,
    solution: &MASolution,
    params: &ClassParams,
    lambda: f64,
    mu: f64,
) -> Result<FunctionalReport> {
    let bg = problem.background();
    let omega_x = bg.omega_x_field();
    let f = crate::geometry::ma_determinant_ratio(&solution.metric, bg)?;
    let class = class_measures(&f, bg, params)?;
    let h = gradient_quantity_h(&solution.phi, bg, &solution.metric, lambda, params.eps)?;
    let q = c2_quantity_q(&solution.phi, &solution.metric, bg, mu, params.eps)?;
    let s = c3_tensor_normsq(&solution.metric, bg)?;
    Ok(FunctionalReport {
        entropy_p: class.entropy_p,
        // L^{1+ε} norm of e^F against ω_X^n / V
        exp_moment_norm: class.exp_moment.powf(1.0 / (1.0 + params.eps)),
        sup_exp_neg_f: class.sup_exp_neg_f,
        laplacian_condition: class.laplacian_condition,
        gradient_condition: class.gradient_condition,
        grad_f_lp: gradient_lp_budget(&f, &omega_x, params.p)?,
        hess_f_lp: hessian_lp_budget(&f, &omega_x, params.p)?,
        sup_h: h.sup,
        sup_q: q.sup,
        sup_s: s.max(),
        in_entropy_class: class.in_entropy_class,
        in_m_prime: class.in_m_prime,
        in_m_double_prime: class.in_m_double_prime,
        in_m_tilde: class.in_m_tilde,
    })
}
