use std::collections::BTreeMap;
use std::f64::consts::PI;

use kgl_core::cache::{encode, CachedField};
use kgl_core::family::{generate_family, FamilyMember};
use kgl_core::field::ScalarField;
use kgl_core::functionals::{functional_report, FunctionalReport};
use kgl_core::geometry::ma_determinant_ratio;
use kgl_core::green::{assemble_laplacian, sample_sources, solve_green, GreenField, LaplacianOperator};
use kgl_core::linalg::KrylovStats;
use kgl_core::ma::{solve_ma, MASolution};
use kgl_core::sharpness::{gradient_blowup, trace_blowup, log_sweep, BlowupSummary, RadialProfile};
use kgl_core::verify::*;
use kgl_core::KglError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{key_of, sha256_hex, FieldCache};
use crate::config::{BlowupKind, RunConfig, SharpnessBlock};
use crate::error::{AtMember, CliError};

pub struct Context {
    pub config: RunConfig,
    pub cache: FieldCache,
}

pub struct Solved {
    pub member: FamilyMember,
    pub solution: MASolution,
    /// `F` recovered from the solved metric.
    pub f: ScalarField,
}

pub struct WithGreens {
    pub solved: Solved,
    pub op: LaplacianOperator,
    pub greens: Vec<GreenField>,
}

#[derive(Serialize, Deserialize)]
struct MaMeta {
    residual: f64,
    normalizer: f64,
    iterations: usize,
    newton_damping_history: Vec<f64>,
    residual_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GreenMeta {
    iterations: usize,
    residual: f64,
}

fn field_hash(field: &CachedField) -> String {
    sha256_hex(&encode(field))
}

impl Context {
    pub fn family(&self) -> Result<Vec<FamilyMember>, CliError> {
        let grid = self.config.grid_spec()?;
        Ok(generate_family(grid, &self.config.family_spec(), &self.config.class.params)?)
    }

    fn solve_member(&self, member: FamilyMember) -> Result<Solved, CliError> {
        let problem = &member.problem;
        let bg = problem.background();
        let s = &self.config.solver;
        let key = key_of(&(
            "ma",
            bg.grid().n(),
            bg.grid().m(),
            bg.chi().diag,
            (bg.chi().off.re, bg.chi().off.im),
            bg.t(),
            field_hash(&CachedField::Scalar(problem.f().clone())),
            s.ma_tol,
            s.ma_max_iter,
        ))?;
        let solution = match self.cache.load::<MaMeta>(&key)? {
            Some((CachedField::Scalar(phi), meta)) => MASolution {
                metric: bg.metric_from_potential(&phi),
                phi,
                residual: meta.residual,
                normalizer: meta.normalizer,
                iterations: meta.iterations,
                newton_damping_history: meta.newton_damping_history,
                residual_history: meta.residual_history,
            },
            _ => {
                let sol = solve_ma(problem, s.ma_tol, s.ma_max_iter).at(&member.coordinates)?;
                let meta = MaMeta {
                    residual: sol.residual,
                    normalizer: sol.normalizer,
                    iterations: sol.iterations,
                    newton_damping_history: sol.newton_damping_history.clone(),
                    residual_history: sol.residual_history.clone(),
                };
                self.cache.store(&key, &CachedField::Scalar(sol.phi.clone()), &meta)?;
                sol
            }
        };
        let f = ma_determinant_ratio(&solution.metric, bg).at(&member.coordinates)?;
        Ok(Solved { member, solution, f })
    }

    pub fn solve_all(&self) -> Result<Vec<Solved>, CliError> {
        let family = self.family()?;
        crate::log(&format!("solving {} family members", family.len()));
        family.into_par_iter().map(|m| self.solve_member(m)).collect()
    }

    fn green(
        &self,
        op: &LaplacianOperator,
        metric_key: &str,
        source: usize,
        coords: &BTreeMap<String, f64>,
    ) -> Result<GreenField, CliError> {
        let tol = self.config.solver.green_tol;
        let key = key_of(&("green", metric_key, source, tol))?;
        if let Some((CachedField::Green { values, .. }, meta)) = self.cache.load::<GreenMeta>(&key)? {
            let stats = KrylovStats {
                iterations: meta.iterations,
                residual: meta.residual,
            };
            return GreenField::from_values(op, source, values, stats).at(coords);
        }
        let gf = solve_green(op, source, tol).at(coords)?;
        let field = CachedField::Green {
            source: source as u64,
            values: gf.g.clone(),
        };
        let meta = GreenMeta {
            iterations: gf.stats.iterations,
            residual: gf.stats.residual,
        };
        self.cache.store(&key, &field, &meta)?;
        Ok(gf)
    }

    pub fn sources(&self, solved: &Solved) -> Vec<usize> {
        let f = solved.member.problem.f();
        sample_sources(f.grid(), self.config.sources, self.config.seed, &[f.argmax(), f.argmin()])
    }

    pub fn with_greens(&self, solved: Solved) -> Result<WithGreens, CliError> {
        let coords = solved.member.coordinates.clone();
        let op = assemble_laplacian(&solved.solution.metric).at(&coords)?;
        let metric_key = field_hash(&CachedField::Metric(solved.solution.metric.clone()));
        let greens = self
            .sources(&solved)
            .par_iter()
            .map(|&x| self.green(&op, &metric_key, x, &coords))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(WithGreens { solved, op, greens })
    }

    pub fn green_all(&self) -> Result<Vec<WithGreens>, CliError> {
        let solved = self.solve_all()?;
        crate::log(&format!("computing Green functions at {} random sources plus the extrema of F", self.config.sources));
        solved.into_par_iter().map(|s| self.with_greens(s)).collect()
    }
}

/// Smooth test functions for the representation and Sobolev-Morrey checks.
pub fn sample_functions(grid: &kgl_core::GridSpec, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..count)
        .map(|_| {
            let dim = grid.dim();
            let c: Vec<f64> = (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ScalarField::from_fn(*grid, |x| {
                (0..dim)
                    .map(|a| c[a] * (2.0 * PI * x[a]).sin() + c[a + dim] * (2.0 * PI * (x[a] + x[(a + 1) % dim])).cos())
                    .sum()
            })
        })
        .collect()
}

pub fn green_quantities_of(w: &WithGreens, delta: f64) -> GreenQuantities {
    green_quantities(&w.greens, &w.op, delta)
}

/// Every per-member check of the verifier battery.
pub fn member_checks(ctx: &Context, w: &WithGreens) -> Result<Vec<VerificationReport>, CliError> {
    let cfg = &ctx.config;
    let coords = &w.solved.member.coordinates;
    let bg = w.solved.member.problem.background();
    let grid = *bg.grid();
    let p = cfg.class.params.p;
    let mut out = Vec::new();
    for gf in &w.greens {
        out.push(check_lower_chain(gf, &w.op).with_coordinate("source", gf.source as f64));
        for beta in [0.5, 1.0] {
            out.push(check_gradient_identity(gf, &w.op, beta, cfg.checks.gradient_tol).at(coords)?);
        }
        let v = degiorgi_normalize(&gf.g, &w.op);
        let r = match check_degiorgi(&v, &w.solved.f, bg, p) {
            Ok(fit) => fit.report(),
            Err(e @ KglError::RecursionViolated(_)) => {
                VerificationReport::new("degiorgi", 1.0, 0.0, 0.0).with_note(e.to_string())
            }
            Err(e) => return Err(e).at(coords),
        };
        out.push(r.with_coordinate("source", gf.source as f64));
    }
    let samples = sample_functions(&grid, cfg.checks.representation_samples, cfg.seed);
    for (j, u) in samples.iter().enumerate() {
        out.push(
            check_representation(&w.op, &w.greens, u, cfg.solver.green_tol, cfg.checks.representation_factor)
                .with_coordinate("sample", j as f64),
        );
    }
    if p > 2.0 * grid.n() as f64 && !samples.is_empty() {
        out.extend(check_sobolev_morrey(&w.greens, &w.op, &samples, p).at(coords)?);
    }
    out.push(check_curvature_floor(&w.solved.solution, &w.solved.f, grid.n()).at(coords)?);
    Ok(out.into_iter().map(|r| r.with_coordinates(coords)).collect())
}

pub fn sweep_member(ctx: &Context, w: &WithGreens) -> Result<SweepMember, CliError> {
    let coords = &w.solved.member.coordinates;
    let class = kgl_core::functionals::class_measures(
        &w.solved.f,
        w.solved.member.problem.background(),
        &ctx.config.class.params,
    )
    .at(coords)?;
    Ok(SweepMember {
        coordinates: coords.clone(),
        quantities: green_quantities_of(w, ctx.config.class.delta),
        class,
    })
}

pub fn functionals_of(ctx: &Context, s: &Solved) -> Result<FunctionalReport, CliError> {
    let c = &ctx.config;
    functional_report(&s.member.problem, &s.solution, &c.class.params, c.checks.lambda, c.checks.mu)
        .at(&s.member.coordinates)
}

/// Growth exponent of one sup quantity along a `δ` series.
type Getter = fn(&FunctionalReport) -> f64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupRecord {
    pub coordinates: BTreeMap<String, f64>,
    pub quantity: String,
    pub exponent: f64,
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn blowup_records(
    members: &[(BTreeMap<String, f64>, FunctionalReport)],
    deltas_per_series: usize,
) -> Vec<BlowupRecord> {
    let mut out = Vec::new();
    for chunk in members.chunks(deltas_per_series) {
        let deltas: Vec<f64> = chunk.iter().map(|(c, _)| c["delta"]).collect();
        let mut coordinates = chunk[0].0.clone();
        coordinates.remove("delta");
        let series: [(&str, Getter); 3] = [("sup_h", |r| r.sup_h), ("sup_q", |r| r.sup_q), ("sup_s", |r| r.sup_s)];
        for (name, get) in series {
            let values: Vec<f64> = chunk.iter().map(|(_, r)| get(r)).collect();
            out.push(BlowupRecord {
                coordinates: coordinates.clone(),
                quantity: name.to_owned(),
                exponent: blowup_exponent(&deltas, &values),
                deltas: deltas.clone(),
                values,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessFit {
    pub blowup: BlowupKind,
    pub a: f64,
    pub n: usize,
    pub p: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub expected_slope: f64,
    pub budget_variation: f64,
    pub budget_limit: Option<f64>,
}

pub fn sharpness_block(ctx: &Context, block: &SharpnessBlock) -> Result<(BlowupSummary, SharpnessFit), CliError> {
    let sh = &ctx.config.sharpness;
    let profile = RadialProfile::new(block.a, 0.0, block.n, block.p)?;
    let deltas = log_sweep(sh.delta_max, sh.delta_min, sh.delta_count);
    let summary = match block.blowup {
        BlowupKind::Gradient => gradient_blowup(&profile, &deltas)?,
        BlowupKind::Trace => trace_blowup(&profile, &deltas)?,
    };
    let fit = SharpnessFit {
        blowup: block.blowup,
        a: block.a,
        n: block.n,
        p: block.p,
        slope: summary.fit.slope,
        intercept: summary.fit.intercept,
        r_squared: summary.fit.r_squared,
        expected_slope: summary.expected_slope,
        budget_variation: summary.budget_variation,
        budget_limit: summary.budget_limit,
    };
    Ok((summary, fit))
}

/// Slope and bounded-budget checks of one sharpness block.
pub fn sharpness_reports(fit: &SharpnessFit) -> Vec<VerificationReport> {
    let mut coords = BTreeMap::new();
    coords.insert("a".to_owned(), fit.a);
    coords.insert("n".to_owned(), fit.n as f64);
    coords.insert("p".to_owned(), fit.p);
    let name = match fit.blowup {
        BlowupKind::Gradient => "gradient",
        BlowupKind::Trace => "trace",
    };
    vec![
        VerificationReport::new(
            format!("{name}_blowup_slope"),
            (fit.slope - fit.expected_slope).abs(),
            0.1 * fit.expected_slope.abs(),
            0.0,
        )
        .with_coordinates(&coords)
        .with_measured("slope", fit.slope)
        .with_measured("expected_slope", fit.expected_slope)
        .with_measured("r_squared", fit.r_squared),
        {
            let r = VerificationReport::new(format!("{name}_budget_drift"), fit.budget_variation, BUDGET_DRIFT, 0.0)
                .with_coordinates(&coords);
            match fit.budget_limit {
                Some(limit) => r.with_measured("budget_limit", limit),
                None => r,
            }
        },
    ]
}
