use std::path::{Path, PathBuf};

use kgl_core::family::{BudgetTarget, FamilyKind, FamilySpec};
use kgl_core::functionals::ClassParams;
use kgl_core::verify::MetricClass;
use kgl_core::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub background: BackgroundConfig,
    pub family: FamilyConfig,
    pub class: ClassConfig,
    pub solver: SolverConfig,
    pub checks: CheckConfig,
    pub sharpness: SharpnessConfig,
    /// Random sources per member; the extrema of `F` are always added.
    pub sources: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub chi_eigenvalues: Vec<Vec<f64>>,
    pub t_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub amplitude: f64,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub hold_budget: Option<BudgetTarget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassConfig {
    #[serde(flatten)]
    pub params: ClassParams,
    /// Exponent offset of the Green integrability bounds.
    pub delta: f64,
    pub declared: MetricClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub ma_tol: f64,
    pub ma_max_iter: usize,
    pub green_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub uniformity_factor: f64,
    pub gradient_tol: f64,
    pub representation_factor: f64,
    pub representation_samples: usize,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupKind {
    /// `sup |∇φ_δ|`, expected rate `δ^{a-1/2}`.
    Gradient,
    /// `tr i∂∂̄φ_δ` at `ρ = δ`, expected rate `δ^{a-1}`.
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessBlock {
    pub blowup: BlowupKind,
    pub a: f64,
    pub n: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    pub blocks: Vec<SharpnessBlock>,
    pub delta_max: f64,
    pub delta_min: f64,
    pub delta_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { n: 2, m: 16 },
            background: BackgroundConfig::default(),
            family: FamilyConfig {
                kind: FamilyKind::BandLimited { modes: 2 },
                amplitude: 0.3,
                deltas: vec![],
                hold_budget: None,
            },
            class: ClassConfig::default(),
            solver: SolverConfig::default(),
            checks: CheckConfig::default(),
            sharpness: SharpnessConfig::default(),
            sources: 8,
            output_dir: PathBuf::from("kgl-out"),
            seed: 7,
            workers: 0,
        }
    }
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            chi_eigenvalues: vec![vec![0.5, 0.3]],
            t_values: vec![1.0, 0.3, 0.1, 0.03],
        }
    }
}

impl Default for ClassConfig {
    fn default() -> Self {
        Self {
            params: ClassParams::default(),
            delta: 0.1,
            declared: MetricClass::MPrime,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ma_tol: 1e-10,
            ma_max_iter: 50,
            green_tol: 1e-10,
        }
    }
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            uniformity_factor: 3.0,
            gradient_tol: 0.05,
            representation_factor: 10.0,
            representation_samples: 3,
            lambda: 1.0,
            mu: 1.0,
        }
    }
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            blocks: vec![
                SharpnessBlock {
                    blowup: BlowupKind::Gradient,
                    a: 0.4,
                    n: 2,
                    p: 1.5,
                },
                SharpnessBlock {
                    blowup: BlowupKind::Trace,
                    a: 0.9,
                    n: 2,
                    p: 3.0,
                },
            ],
            delta_max: 1e-2,
            delta_min: 1e-6,
            delta_count: 9,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.grid.n, self.grid.m).map_err(|e| CliError::ConfigInvalid(e.to_string()))
    }

    pub fn family_spec(&self) -> FamilySpec {
        FamilySpec {
            kind: self.family.kind.clone(),
            amplitude: self.family.amplitude,
            seed: self.seed,
            t_values: self.background.t_values.clone(),
            chi_eigenvalues: self.background.chi_eigenvalues.clone(),
            deltas: self.family.deltas.clone(),
            hold_budget: self.family.hold_budget,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::ConfigInvalid(m));
        let grid = self.grid_spec()?;
        self.family_spec()
            .validate(grid.n())
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        self.class
            .params
            .validate(grid.n())
            .map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let n = grid.n() as f64;
        if !(self.class.delta > 0.0 && self.class.delta < 2.0 * n / (2.0 * n - 1.0)) {
            return invalid(format!("class.delta must lie in (0, 2n/(2n-1)), got {}", self.class.delta));
        }
        let s = &self.solver;
        if !(s.ma_tol > 0.0 && s.green_tol > 0.0) || s.ma_max_iter == 0 {
            return invalid("solver tolerances must be positive and ma_max_iter nonzero".into());
        }
        let c = &self.checks;
        if !(c.uniformity_factor >= 1.0) {
            return invalid(format!("uniformity_factor must be at least 1, got {}", c.uniformity_factor));
        }
        if !(c.gradient_tol >= 0.0 && c.representation_factor > 0.0 && c.lambda > 0.0 && c.mu > 0.0) {
            return invalid("check tolerances, λ and μ must be positive".into());
        }
        if self.sources == 0 {
            return invalid("sources must be positive".into());
        }
        let sh = &self.sharpness;
        if !(sh.delta_min > 0.0 && sh.delta_min < sh.delta_max && sh.delta_max <= 1e-2) || sh.delta_count < 2 {
            return invalid("sharpness needs 0 < delta_min < delta_max ≤ 0.01 and at least 2 points".into());
        }
        for b in &sh.blocks {
            if !(b.a > 0.0 && b.a < 1.0) || b.n == 0 || !(b.p > 0.0) {
                return invalid(format!("bad sharpness block {b:?}"));
            }
        }
        Ok(())
    }
}
