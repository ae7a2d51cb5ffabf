//! Command implementations behind the `dimfac` binary.

pub mod config;
pub mod record;
pub mod render;

use std::path::{Path, PathBuf};
use std::time::Instant;

use dimfac::evaluate::Evaluator;
use dimfac::exact::{enumerate_exact, export_milp_lp, ExportSummary};
use dimfac::grasp::grasp_solve_with;
use thiserror::Error;

use config::{Instance, InstanceConfig};
use record::{parse_placement, SolutionRecord, SolverInfo};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid placement: {0}")]
    Placement(String),
    #[error("solution does not match the instance: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Solver(#[from] dimfac::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Grasp,
    Exact,
}

fn load(config: &Path) -> Result<(Instance, f64), CliError> {
    let start = Instant::now();
    let inst = InstanceConfig::load(config)?.build()?;
    for w in &inst.warnings {
        eprintln!("warning: {w}");
    }
    Ok((inst, start.elapsed().as_secs_f64()))
}

pub fn cmd_solve(config: &Path, method: Method, seed: Option<u64>, out: &Path) -> Result<SolutionRecord, CliError> {
    let (mut inst, preprocess) = load(config)?;
    if let Some(s) = seed {
        inst.grasp.rng_seed = s;
    }
    let ev = Evaluator::new(&inst.di, &inst.facilities, &inst.lost_cost);
    let start = Instant::now();
    let (p, e, info) = match method {
        Method::Exact => {
            let (p, e) = enumerate_exact(&ev, inst.exact_limit)?;
            (p, e, ("exact", None, None, None))
        }
        Method::Grasp => {
            let o = grasp_solve_with(&ev, &inst.grasp)?;
            let meta = ("grasp", Some(inst.grasp.rng_seed), Some(o.stats.visits), Some(o.stats.initial_best));
            (o.placement, o.evaluation, meta)
        }
    };
    let solver = SolverInfo {
        method: info.0.into(),
        seed: info.1,
        preprocess_seconds: preprocess,
        solve_seconds: start.elapsed().as_secs_f64(),
        iterations: info.2,
        initial_total: info.3,
    };
    let rec = SolutionRecord::new(&inst, &p, &e, solver);
    rec.save(out)?;
    Ok(rec)
}

pub fn cmd_evaluate(config: &Path, placement: &str, out: &Path) -> Result<SolutionRecord, CliError> {
    let (inst, preprocess) = load(config)?;
    let p = parse_placement(placement)?;
    let start = Instant::now();
    let ev = Evaluator::new(&inst.di, &inst.facilities, &inst.lost_cost);
    let e = ev.objective(&p)?;
    let solver = SolverInfo {
        method: "evaluate".into(),
        seed: None,
        preprocess_seconds: preprocess,
        solve_seconds: start.elapsed().as_secs_f64(),
        iterations: None,
        initial_total: None,
    };
    let rec = SolutionRecord::new(&inst, &p, &e, solver);
    rec.save(out)?;
    Ok(rec)
}

pub fn cmd_export_milp(
    config: &Path,
    out: &Path,
    warm_start: Option<&Path>,
    warn_rows: usize,
) -> Result<ExportSummary, CliError> {
    let (inst, _) = load(config)?;
    let start = match warm_start {
        Some(path) => Some(SolutionRecord::load(path)?.placement_for(&inst)?),
        None => None,
    };
    let ev = Evaluator::new(&inst.di, &inst.facilities, &inst.lost_cost);
    let summary = export_milp_lp(&ev, out, start.as_ref(), warn_rows)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(summary)
}

pub fn cmd_render(config: &Path, solution: &Path, out: &Path, show_grid: bool) -> Result<(), CliError> {
    let (inst, _) = load(config)?;
    let rec = SolutionRecord::load(solution)?;
    let p = rec.placement_for(&inst)?;
    if rec.config_digest != inst.digest {
        eprintln!("warning: solution was produced for a different configuration");
    }
    let ev = Evaluator::new(&inst.di, &inst.facilities, &inst.lost_cost);
    let e = ev.objective(&p)?;
    std::fs::write(out, render::render_svg(&inst, &p, &e, show_grid)).map_err(|e| CliError::io(out, e))
}
