use std::path::Path;

use atlc_core::controller::{simulate_closed_loop, ControllerKind, RunSummary};
use atlc_core::margin::tau_star_scan;
use atlc_core::model::{AccModel, State};
use atlc_core::robust_bounds::make_box;
use atlc_core::Error;
use rayon::prelude::*;

use crate::config::{load_scenario, load_suite, parse_override, Scenario};
use crate::error::CliError;
use crate::output::{self, comparison_row, render_table, write_comparison, write_margin_map, write_run, write_summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNSAFE: i32 = 2;
pub const EXIT_RUN_FAILED: i32 = 3;

/// How a single closed-loop run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub id: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub summary: RunSummary,
    pub failure: Option<String>,
}

fn kind_label(kind: &ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Atlc => "atlc",
        ControllerKind::TlcFixed { robust: false, .. } => "tlc",
        ControllerKind::TlcFixed { robust: true, .. } => "tlc_robust",
        ControllerKind::Hocbf { .. } => "hocbf",
    }
}

fn exit_for(error: &Error) -> i32 {
    match error {
        Error::InvalidArgument(_) => EXIT_ERROR,
        _ => EXIT_RUN_FAILED,
    }
}

/// Simulates one scenario and writes its files into `dir`, including the
/// partial log of a run that stopped early.
pub fn execute(scenario: &Scenario, dir: &Path, trace: bool) -> Result<RunOutcome, CliError> {
    let mut cfg = scenario.config.clone();
    cfg.trace_candidates = trace;
    let (log, failure) = match simulate_closed_loop(&cfg) {
        Ok(log) => (log, None),
        Err(f) => (f.log, Some(f.error)),
    };
    let (status, code) = match &failure {
        Some(e @ Error::Zeno { .. }) => ("zeno", exit_for(e)),
        Some(e @ Error::InfeasibleAbort { .. }) => ("aborted", exit_for(e)),
        Some(e) => ("failed", exit_for(e)),
        None => ("ok", EXIT_OK),
    };
    let summary = write_run(dir, &log, &cfg.params, cfg.slack_cap)?;
    let (status, code) = if code == EXIT_OK && summary.min_h < 0.0 {
        ("unsafe", EXIT_UNSAFE)
    } else {
        (status, code)
    };
    write_summary(dir, &scenario.id, kind_label(&cfg.kind), status, &summary)?;
    Ok(RunOutcome {
        id: scenario.id.clone(),
        status,
        exit_code: code,
        summary,
        failure: failure.map(|e| e.to_string()),
    })
}

pub fn run(config: &Path, overrides: &[String], out: &Path, trace: bool) -> Result<i32, CliError> {
    let overrides = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = load_scenario(config, &overrides)?;
    let outcome = execute(&scenario, out, trace)?;
    if let Some(msg) = &outcome.failure {
        eprintln!("{}: {msg}", scenario.id);
    }
    let s = &outcome.summary;
    output::print(&format!(
        "{}: {} (min h {}, {} infeasible of {} events)\n",
        outcome.id,
        outcome.status,
        crate::format::g9(s.min_h),
        s.infeasible_events,
        s.event_count
    ));
    Ok(outcome.exit_code)
}

pub fn compare(dir: &Path, out: &Path, trace: bool) -> Result<i32, CliError> {
    let suite = load_suite(dir)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let outcomes = suite
        .par_iter()
        .map(|s| execute(s, &out.join(&s.id), trace))
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<Vec<String>> = outcomes.iter().map(|o| comparison_row(&o.id, &o.summary)).collect();
    write_comparison(&out.join("comparison.csv"), rows.clone())?;

    let mut header = output::COMPARISON_HEADER.to_vec();
    header.push("status");
    let shown: Vec<Vec<String>> = rows
        .into_iter()
        .zip(&outcomes)
        .map(|(mut r, o)| {
            r.push(o.status.to_string());
            r
        })
        .collect();
    output::print(&render_table(&header, &shown));
    for o in &outcomes {
        if let Some(msg) = &o.failure {
            eprintln!("{}: {msg}", o.id);
        }
    }
    Ok(if outcomes.iter().any(|o| o.exit_code == EXIT_RUN_FAILED) {
        EXIT_RUN_FAILED
    } else {
        EXIT_OK
    })
}

pub fn margin_map(config: &Path, z: f64, v: f64, out: &Path) -> Result<i32, CliError> {
    let scenario = load_scenario(config, &[])?;
    let cfg = &scenario.config;
    let bad = |e: Error| CliError::Config(e.to_string());
    let model = AccModel::new(cfg.params.clone()).map_err(bad)?;
    let x = State::acc(z, v).map_err(bad)?;
    let bx = make_box(&x, &cfg.box_under, &cfg.box_over).map_err(bad)?;
    let grid = cfg.tau_select.candidates();
    let map = tau_star_scan(&bx, &grid, &model, &cfg.bounds).map_err(bad)?;
    write_margin_map(out, &map)?;
    output::print(&format!(
        "{} grid points, tau* = {}\n",
        map.tau_grid.len(),
        map.tau_star.map_or("none".to_string(), crate::format::g9)
    ));
    Ok(EXIT_OK)
}
