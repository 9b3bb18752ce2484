use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgl_core::verify::{check_apriori_sweeps, check_green_uniformity, AprioriMember, VerificationReport};
use serde::Serialize;

mod cache;
mod config;
mod error;
mod output;
mod pipeline;

use cache::FieldCache;
use config::RunConfig;
use error::CliError;
use output::{cell, flag, write_json, write_jsonl, Table};
use pipeline::*;

#[derive(Parser)]
#[command(name = "kgl", version, about = "Green function bounds on flat Kähler tori")]
struct Cli {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, overriding the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the Monge-Ampère equation for every family member.
    SolveMa,
    /// Green functions at the sampled sources and their integrability quantities.
    Green,
    /// Full verification battery.
    Verify,
    /// A priori estimates along the family.
    Sweep,
    /// Radial sharpness profiles.
    Examples,
    /// Aggregate JSON-lines reports in the output directory into CSV.
    Report,
}

pub fn log(msg: &str) {
    eprintln!("[kgl] {msg}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let config = effective_config(&cli)?;
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        return Err(CliError::ConfigInvalid("no subcommand given (see --help)".into()));
    };
    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let cache_dir = std::env::var_os("KGL_CACHE_DIR").map_or_else(|| out.join("cache"), PathBuf::from);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::ConfigInvalid(format!("worker pool: {e}")))?;
    let ctx = Context {
        cache: FieldCache::open(cache_dir)?,
        config,
    };
    write_json(&out.join("config.json"), &ctx.config)?;
    pool.install(|| match command {
        Command::SolveMa => solve_ma_cmd(&ctx, &out),
        Command::Green => green_cmd(&ctx, &out),
        Command::Verify => verify_cmd(&ctx, &out),
        Command::Sweep => sweep_cmd(&ctx, &out),
        Command::Examples => examples_cmd(&ctx, &out),
        Command::Report => report_cmd(&out),
    })
}

fn coordinate_cells(c: &BTreeMap<String, f64>) -> Vec<(String, String)> {
    c.iter().map(|(k, v)| cell(k.clone(), *v)).collect()
}

#[derive(Serialize)]
struct MaRecord<'a> {
    coordinates: &'a BTreeMap<String, f64>,
    amplitude: f64,
    gradient_budget: f64,
    residual: f64,
    normalizer: f64,
    iterations: usize,
    osc_phi: f64,
    min_eigenvalue: f64,
    class: kgl_core::functionals::ClassMembership,
}

fn solve_ma_cmd(ctx: &Context, out: &Path) -> Result<ExitCode, CliError> {
    let solved = ctx.solve_all()?;
    let mut records = Vec::new();
    let mut table = Table::default();
    for s in &solved {
        let r = MaRecord {
            coordinates: &s.member.coordinates,
            amplitude: s.member.amplitude,
            gradient_budget: s.member.gradient_budget,
            residual: s.solution.residual,
            normalizer: s.solution.normalizer,
            iterations: s.solution.iterations,
            osc_phi: s.solution.phi.oscillation(),
            min_eigenvalue: s.solution.metric.min_eigenvalue().0,
            class: s.member.class,
        };
        let mut row = coordinate_cells(r.coordinates);
        row.extend([
            cell("amplitude", r.amplitude),
            cell("gradient_budget", r.gradient_budget),
            cell("residual", r.residual),
            cell("normalizer", r.normalizer),
            cell("iterations", r.iterations as f64),
            cell("osc_phi", r.osc_phi),
            cell("min_eigenvalue", r.min_eigenvalue),
            cell("entropy_p", r.class.entropy_p),
            flag("in_entropy_class", r.class.in_entropy_class),
            flag("in_m_prime", r.class.in_m_prime),
            flag("in_m_double_prime", r.class.in_m_double_prime),
            flag("in_m_tilde", r.class.in_m_tilde),
        ]);
        table.push(row);
        records.push(r);
    }
    write_jsonl(&out.join("ma.jsonl"), &records)?;
    table.write(&out.join("ma.csv"))?;
    log(&format!("wrote {} solutions to {}", records.len(), out.display()));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GreenRecord<'a> {
    coordinates: &'a BTreeMap<String, f64>,
    sources: Vec<usize>,
    iterations: Vec<usize>,
    quantities: kgl_core::verify::GreenQuantities,
}

fn green_cmd(ctx: &Context, out: &Path) -> Result<ExitCode, CliError> {
    let all = ctx.green_all()?;
    let mut records = Vec::new();
    let mut table = Table::default();
    for w in &all {
        let q = green_quantities_of(w, ctx.config.class.delta);
        let mut row = coordinate_cells(&w.solved.member.coordinates);
        for (name, v) in kgl_core::verify::GreenQuantities::NAMES.iter().zip(q.as_array()) {
            row.push(cell(*name, v));
        }
        table.push(row);
        records.push(GreenRecord {
            coordinates: &w.solved.member.coordinates,
            sources: w.greens.iter().map(|g| g.source).collect(),
            iterations: w.greens.iter().map(|g| g.stats.iterations).collect(),
            quantities: q,
        });
    }
    write_jsonl(&out.join("green.jsonl"), &records)?;
    table.write(&out.join("green.csv"))?;
    log(&format!("wrote Green quantities for {} members", records.len()));
    Ok(ExitCode::SUCCESS)
}

fn report_table(reports: &[VerificationReport]) -> Table {
    let mut table = Table::default();
    for r in reports {
        let mut row = vec![("check".to_owned(), r.name.clone())];
        row.extend(coordinate_cells(&r.coordinates));
        row.extend([
            cell("value", r.value),
            cell("bound", r.bound),
            cell("margin", r.margin),
            flag("pass", r.pass),
        ]);
        table.push(row);
    }
    table
}

fn finish_reports(reports: &[VerificationReport], out: &Path, stem: &str) -> Result<usize, CliError> {
    write_jsonl(&out.join(format!("{stem}.jsonl")), reports)?;
    report_table(reports).write(&out.join(format!("{stem}.csv")))?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    log(&format!("{stem}: {} checks, {} passed, {failed} failed", reports.len(), reports.len() - failed));
    for r in reports.iter().filter(|r| !r.pass) {
        log(&format!(
            "FAIL {} at {}: value {:e} vs bound {:e}",
            r.name,
            error::fmt_coordinates(&r.coordinates),
            r.value,
            r.bound
        ));
    }
    Ok(failed)
}

fn verify_cmd(ctx: &Context, out: &Path) -> Result<ExitCode, CliError> {
    use rayon::prelude::*;
    let all = ctx.green_all()?;
    let per_member: Vec<Vec<VerificationReport>> =
        all.par_iter().map(|w| member_checks(ctx, w)).collect::<Result<_, _>>()?;
    let mut reports: Vec<VerificationReport> = per_member.into_iter().flatten().collect();
    if all.len() >= 2 {
        let members = all.iter().map(|w| sweep_member(ctx, w)).collect::<Result<Vec<_>, _>>()?;
        reports.extend(check_green_uniformity(&members, ctx.config.class.declared, ctx.config.checks.uniformity_factor)?);
    }
    let failed = finish_reports(&reports, out, "verify")?;
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    coordinates: &'a BTreeMap<String, f64>,
    functionals: &'a kgl_core::functionals::FunctionalReport,
}

fn sweep_cmd(ctx: &Context, out: &Path) -> Result<ExitCode, CliError> {
    use rayon::prelude::*;
    let solved = ctx.solve_all()?;
    let measured: Vec<(BTreeMap<String, f64>, kgl_core::functionals::FunctionalReport)> = solved
        .par_iter()
        .map(|s| Ok((s.member.coordinates.clone(), functionals_of(ctx, s)?)))
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::default();
    for (c, r) in &measured {
        let mut row = coordinate_cells(c);
        row.extend([
            cell("entropy_p", r.entropy_p),
            cell("exp_moment_norm", r.exp_moment_norm),
            cell("sup_exp_neg_f", r.sup_exp_neg_f),
            cell("laplacian_condition", r.laplacian_condition),
            cell("gradient_condition", r.gradient_condition),
            cell("grad_f_lp", r.grad_f_lp),
            cell("hess_f_lp", r.hess_f_lp),
            cell("sup_h", r.sup_h),
            cell("sup_q", r.sup_q),
            cell("sup_s", r.sup_s),
        ]);
        table.push(row);
    }
    let records: Vec<SweepRecord> = measured
        .iter()
        .map(|(c, r)| SweepRecord {
            coordinates: c,
            functionals: r,
        })
        .collect();
    write_jsonl(&out.join("sweep.jsonl"), &records)?;
    table.write(&out.join("sweep.csv"))?;
    let cfg = &ctx.config;
    let deltas = cfg.family.deltas.len();
    if cfg.family.hold_budget.is_none() && deltas >= 2 {
        // free amplitude along δ: record how fast each sup grows
        let blowups = blowup_records(&measured, deltas);
        for b in &blowups {
            log(&format!("{} exponent {:.4} at {}", b.quantity, b.exponent, error::fmt_coordinates(&b.coordinates)));
        }
        write_jsonl(&out.join("sweep_blowup.jsonl"), &blowups)?;
        return Ok(ExitCode::SUCCESS);
    }
    let members: Vec<AprioriMember> = measured
        .iter()
        .map(|(c, r)| AprioriMember {
            coordinates: c.clone(),
            budget: r.grad_f_lp,
            sup_h: r.sup_h,
            sup_q: r.sup_q,
            sup_s: r.sup_s,
        })
        .collect();
    let reports = check_apriori_sweeps(&members, cfg.checks.uniformity_factor)?;
    finish_reports(&reports, out, "sweep_reports")?;
    Ok(ExitCode::SUCCESS)
}

fn examples_cmd(ctx: &Context, out: &Path) -> Result<ExitCode, CliError> {
    let mut rows = Table::default();
    let mut fits_table = Table::default();
    let mut fits = Vec::new();
    let mut reports = Vec::new();
    for block in &ctx.config.sharpness.blocks {
        let (summary, fit) = sharpness_block(ctx, block)?;
        for r in &summary.rows {
            rows.push(vec![
                cell("a", r.a),
                cell("n", r.n as f64),
                cell("p", r.p),
                cell("delta", r.delta),
                cell("I_p", r.i_p),
                cell("sup_grad", r.sup_grad),
                cell("trace_at_delta", r.trace_at_delta),
            ]);
        }
        fits_table.push(vec![
            ("blowup".to_owned(), serde_json::to_value(fit.blowup)?.as_str().unwrap_or_default().to_owned()),
            cell("a", fit.a),
            cell("n", fit.n as f64),
            cell("p", fit.p),
            cell("slope", fit.slope),
            cell("expected_slope", fit.expected_slope),
            cell("r_squared", fit.r_squared),
            cell("budget_variation", fit.budget_variation),
            cell("budget_limit", fit.budget_limit.unwrap_or(f64::NAN)),
        ]);
        log(&format!(
            "{:?} a={} p={}: slope {:.5} (expected {:.3}), budget variation {:.3}",
            fit.blowup, fit.a, fit.p, fit.slope, fit.expected_slope, fit.budget_variation
        ));
        reports.extend(sharpness_reports(&fit));
        fits.push(fit);
    }
    rows.write(&out.join("sharpness.csv"))?;
    fits_table.write(&out.join("sharpness_fit.csv"))?;
    write_json(&out.join("sharpness_fit.json"), &fits)?;
    finish_reports(&reports, out, "examples")?;
    Ok(ExitCode::SUCCESS)
}

/// Reads every `*.jsonl` file of verification reports in `out` (sorted by
/// name) and writes one row per coordinate set and one per check.
fn report_cmd(out: &Path) -> Result<ExitCode, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    let mut reports = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path)?;
        let parsed: Vec<VerificationReport> =
            text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
        if !parsed.is_empty() {
            log(&format!("{}: {} reports", path.display(), parsed.len()));
        }
        reports.extend(parsed);
    }
    if reports.is_empty() {
        return Err(CliError::NoReports(out.to_path_buf()));
    }
    type Agg = (usize, usize, f64);
    let fold = |acc: &mut Agg, r: &VerificationReport| {
        acc.0 += 1;
        acc.1 += r.pass as usize;
        acc.2 = acc.2.min(r.margin);
    };
    let mut by_coords: BTreeMap<String, (BTreeMap<String, f64>, Agg)> = BTreeMap::new();
    let mut by_check: BTreeMap<String, Agg> = BTreeMap::new();
    for r in &reports {
        let mut c = r.coordinates.clone();
        for k in ["source", "sample", "beta", "p"] {
            c.remove(k);
        }
        let entry = by_coords
            .entry(error::fmt_coordinates(&c))
            .or_insert_with(|| (c, (0, 0, f64::INFINITY)));
        fold(&mut entry.1, r);
        fold(by_check.entry(r.name.clone()).or_insert((0, 0, f64::INFINITY)), r);
    }
    let mut table = Table::default();
    for (coords, (count, passed, margin)) in by_coords.values() {
        let mut row = coordinate_cells(coords);
        row.extend([cell("checks", *count as f64), cell("passed", *passed as f64), cell("min_margin", *margin)]);
        table.push(row);
    }
    table.write(&out.join("summary.csv"))?;
    let mut table = Table::default();
    for (name, (count, passed, margin)) in &by_check {
        table.push(vec![
            ("check".to_owned(), name.clone()),
            cell("checks", *count as f64),
            cell("passed", *passed as f64),
            cell("min_margin", *margin),
        ]);
    }
    table.write(&out.join("summary_by_check.csv"))?;
    log(&format!("aggregated {} reports", reports.len()));
    Ok(ExitCode::SUCCESS)
}
