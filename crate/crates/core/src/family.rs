//! Deterministic families of right-hand sides `F` for sweeps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KglError, Result};
use crate::field::ScalarField;
use crate::functionals::{class_measures, gradient_lp_budget, ClassMembership, ClassParams};
use crate::geometry::BackgroundGeometry;
use crate::grid::GridSpec;
use crate::ma::MAProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Random trigonometric polynomial with wave numbers up to `modes`.
    BandLimited { modes: usize },
    /// `exp(-Σ sin²(π(x_a - 1/2))/w)` centred in the cell.
    RadialBump { width: f64 },
    /// Relative volume form of `(ρ + δ)^a` with the periodized radius
    /// `ρ = Σ sin²(π(x_a - 1/2))/π²`; `δ` comes from the sweep list.
    NearSingular { a: f64 },
}

/// Holds `‖∇F‖_{L^p(e^F ω_X^n)}` at `value` by rescaling each member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetTarget {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    pub t_values: Vec<f64>,
    pub chi_eigenvalues: Vec<Vec<f64>>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub hold_budget: Option<BudgetTarget>,
}

impl FamilySpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(KglError::InvalidArgument(m));
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be finite and nonnegative, got {}", self.amplitude));
        }
        if self.t_values.is_empty() || self.chi_eigenvalues.is_empty() {
            return bad("sweep lists for t and χ must be nonempty".into());
        }
        if self.t_values.iter().any(|&t| !(t > 0.0)) {
            return bad("t must be positive".into());
        }
        if self.chi_eigenvalues.iter().any(|c| c.len() != n || c.iter().any(|&e| e < 0.0)) {
            return bad(format!("each χ entry needs {n} nonnegative eigenvalues"));
        }
        match self.kind {
            FamilyKind::BandLimited { modes: 0 } => return bad("modes must be positive".into()),
            FamilyKind::RadialBump { width } if !(width > 0.0) => return bad("width must be positive".into()),
            FamilyKind::NearSingular { a } => {
                if !(a > 0.0 && a < 1.0) {
                    return bad(format!("a must lie in (0, 1), got {a}"));
                }
                if self.deltas.is_empty() || self.deltas.iter().any(|&d| !(d > 0.0)) {
                    return bad("near-singular families need positive δ values".into());
                }
            }
            _ => {}
        }
        if let Some(b) = self.hold_budget {
            if !(b.p > 0.0 && b.value > 0.0) {
                return bad("budget target needs positive p and value".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub coordinates: BTreeMap<String, f64>,
    pub problem: MAProblem,
    pub class: ClassMembership,
    /// `‖∇F‖_{L^p(e^F ω_X^n)}` with `p` from the class parameters.
    pub gradient_budget: f64,
    pub amplitude: f64,
}

/// Unscaled shape of `F` before the amplitude and normalization are applied.
pub fn raw_profile(grid: GridSpec, kind: &FamilyKind, seed: u64, delta: f64) -> ScalarField {
    match *kind {
        FamilyKind::BandLimited { modes } => band_limited(grid, modes, seed),
        FamilyKind::RadialBump { width } => ScalarField::from_fn(grid, |x| {
            let e: f64 = x.iter().map(|v| (PI * (v - 0.5)).sin().powi(2)).sum();
            (-e / width).exp()
        }),
        FamilyKind::NearSingular { a } => {
            let n = grid.n() as f64;
            ScalarField::from_fn(grid, |x| {
                let rho: f64 = x.iter().map(|v| (PI * (v - 0.5)).sin().powi(2)).sum::<f64>() / (PI * PI);
                n * a.ln() + (a * rho + delta).ln() - (n - a * n + 1.0) * (rho + delta).ln()
            })
        }
    }
}

/// Trigonometric polynomial with sup norm 1.
fn band_limited(grid: GridSpec, modes: usize, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let k = modes as i64;
    let mut terms = Vec::new();
    let mut wave = vec![-k; dim];
    loop {
        // one representative of each ±k pair
        let first = wave.iter().find(|&&w| w != 0).copied();
        if first.is_some_and(|w| w > 0) {
            let norm2: i64 = wave.iter().map(|w| w * w).sum();
            let coef = rng.gen_range(-1.0..1.0) / (1.0 + norm2 as f64);
            let phase = rng.gen_range(0.0..2.0 * PI);
            terms.push((wave.clone(), coef, phase));
        }
        let mut a = 0;
        while a < dim {
            wave[a] += 1;
            if wave[a] <= k {
                break;
            }
            wave[a] = -k;
            a += 1;
        }
        if a == dim {
            break;
        }
    }
    let f = ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(w, c, ph)| {
                let arg: f64 = w.iter().zip(x).map(|(&wi, &xi)| wi as f64 * xi).sum();
                c * (2.0 * PI * arg + ph).cos()
            })
            .sum()
    });
    let top = f.max_abs();
    if top > 0.0 {
        f.map(|v| v / top)
    } else {
        f
    }
}

/// Shape with its mean removed, so the amplitude scales oscillation only.
fn centred(raw: &ScalarField) -> ScalarField {
    let m = raw.mean();
    raw.map(|v| v - m)
}

fn budget_at(shape: &ScalarField, background: &BackgroundGeometry, amplitude: f64, p: f64) -> Result<f64> {
    let problem = MAProblem::normalized(background.clone(), shape.map(|v| amplitude * v))?;
    gradient_lp_budget(problem.f(), &background.omega_x_field(), p)
}

/// Amplitude at which the normalized `amplitude × shape` has the requested
/// gradient budget. The budget grows monotonically with the amplitude for
/// the shapes used here; bisection runs in log scale.
pub fn amplitude_for_budget(shape: &ScalarField, background: &BackgroundGeometry, target: BudgetTarget) -> Result<f64> {
    let (mut lo, mut hi) = (1e-8, 1.0);
    while budget_at(shape, background, hi, target.p)? < target.value {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(KglError::InvalidArgument(format!("budget {} unreachable", target.value)));
        }
    }
    if budget_at(shape, background, lo, target.p)? > target.value {
        return Err(KglError::InvalidArgument(format!("budget {} below resolvable range", target.value)));
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if budget_at(shape, background, mid, target.p)? < target.value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Every combination of `t`, `χ` and `δ` in `spec`, each annotated with
/// its measured class data. Output order is `δ` fastest, then `χ`, then `t`.
pub fn generate_family(grid: GridSpec, spec: &FamilySpec, params: &ClassParams) -> Result<Vec<FamilyMember>> {
    spec.validate(grid.n())?;
    let deltas: Vec<Option<f64>> = match spec.kind {
        FamilyKind::NearSingular { .. } => spec.deltas.iter().map(|&d| Some(d)).collect(),
        _ => vec![None],
    };
    let mut out = Vec::new();
    for &t in &spec.t_values {
        for chi in &spec.chi_eigenvalues {
            let background = BackgroundGeometry::with_diagonal_chi(grid, chi, t)?;
            for delta in &deltas {
                let shape = centred(&raw_profile(grid, &spec.kind, spec.seed, delta.unwrap_or(0.0)));
                let amplitude = match spec.hold_budget {
                    Some(target) if spec.amplitude > 0.0 => amplitude_for_budget(&shape, &background, target)?,
                    _ => spec.amplitude,
                };
                let problem = MAProblem::normalized(background.clone(), shape.map(|v| amplitude * v))?;
                let class = class_measures(problem.f(), &background, params)?;
                let gradient_budget = gradient_lp_budget(problem.f(), &background.omega_x_field(), params.p)?;
                let mut coordinates = BTreeMap::new();
                coordinates.insert("t".to_owned(), t);
                coordinates.insert("chi_min".to_owned(), chi.iter().copied().fold(f64::INFINITY, f64::min));
                coordinates.insert("chi_max".to_owned(), chi.iter().copied().fold(0.0, f64::max));
                coordinates.insert("amplitude".to_owned(), amplitude);
                if let Some(d) = delta {
                    coordinates.insert("delta".to_owned(), *d);
                }
                out.push(FamilyMember {
                    coordinates,
                    problem,
                    class,
                    gradient_budget,
                    amplitude,
                });
            }
        }
    }
    Ok(out)
}
