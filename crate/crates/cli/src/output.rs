//! CSV files written by `run`, `compare` and `margin-map`, and the reader
//! used to recompute a summary from a trajectory file.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use atlc_core::controller::{summarize, DenseRecord, RunSummary, TrajectoryLog};
use atlc_core::margin::MarginMap;
use atlc_core::model::AccParams;

use crate::error::CliError;
use crate::format::{g9, opt_g9, parse_opt};

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "z",
    "v",
    "u",
    "tau",
    "h",
    "V",
    "delta",
    "event_index",
    "feasible",
    "dt_inter_event",
];

pub const COMPARISON_HEADER: [&str; 6] = [
    "scenario",
    "min_h",
    "infeasible_count",
    "event_count",
    "effort_integral",
    "mean_abs_du",
];

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    let fail = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// One row per dense sample. Event columns (`tau`, `dt_inter_event`) are
/// filled only on the first sample of each segment.
pub fn trajectory_rows(log: &TrajectoryLog) -> Vec<Vec<String>> {
    log.dense
        .iter()
        .map(|r| {
            let e = &log.events[r.event_index];
            let (tau, dt) = if r.is_event {
                (opt_g9(e.tau), g9(e.dt_inter_event))
            } else {
                (String::new(), String::new())
            };
            vec![
                g9(r.t),
                g9(r.z),
                g9(r.v),
                g9(r.u),
                tau,
                g9(r.h),
                g9(r.clf),
                opt_g9(e.delta),
                r.event_index.to_string(),
                flag(e.feasible),
                dt,
            ]
        })
        .collect()
}

/// A trajectory file read back into records.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub dense: Vec<DenseRecord>,
    pub event_inputs: Vec<f64>,
    pub event_deltas: Vec<Option<f64>>,
    pub infeasible_events: usize,
}

impl ParsedTrajectory {
    pub fn summary(&self, params: &AccParams, slack_cap: f64) -> RunSummary {
        let at_cap = self
            .event_deltas
            .iter()
            .filter(|d| d.is_some_and(|d| d >= slack_cap))
            .count();
        summarize(
            &self.dense,
            &self.event_inputs,
            self.infeasible_events,
            at_cap,
            params,
        )
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: u64) -> Result<&'a str, CliError> {
    rec.get(i)
        .ok_or_else(|| CliError::Csv(format!("line {line}: missing column {}", TRAJECTORY_HEADER[i])))
}

fn number(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>, CliError> {
    parse_opt(field(rec, i, line)?)
        .map_err(|e| CliError::Csv(format!("line {line}, column {}: {e}", TRAJECTORY_HEADER[i])))
}

fn required(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64, CliError> {
    number(rec, i, line)?
        .ok_or_else(|| CliError::Csv(format!("line {line}: column {} is empty", TRAJECTORY_HEADER[i])))
}

pub fn parse_trajectory(text: &str) -> Result<ParsedTrajectory, CliError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Csv(e.to_string()))?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(CliError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = ParsedTrajectory {
        dense: Vec::new(),
        event_inputs: Vec::new(),
        event_deltas: Vec::new(),
        infeasible_events: 0,
    };
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Csv(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let event_index: usize = field(&rec, 8, line)?
            .parse()
            .map_err(|_| CliError::Csv(format!("line {line}: bad event_index")))?;
        let is_event = number(&rec, 10, line)?.is_some();
        let r = DenseRecord {
            t: required(&rec, 0, line)?,
            z: required(&rec, 1, line)?,
            v: required(&rec, 2, line)?,
            u: required(&rec, 3, line)?,
            h: required(&rec, 5, line)?,
            clf: required(&rec, 6, line)?,
            event_index,
            is_event,
        };
        if is_event {
            out.event_inputs.push(r.u);
            out.event_deltas.push(number(&rec, 7, line)?);
            if field(&rec, 9, line)? == "0" {
                out.infeasible_events += 1;
            }
        }
        out.dense.push(r);
    }
    Ok(out)
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "scenario",
    "kind",
    "status",
    "min_h",
    "infeasible_count",
    "event_count",
    "effort_integral",
    "mean_abs_du",
    "slack_at_cap",
];

pub fn summary_row(id: &str, kind: &str, status: &str, s: &RunSummary) -> Vec<String> {
    vec![
        id.to_string(),
        kind.to_string(),
        status.to_string(),
        g9(s.min_h),
        s.infeasible_events.to_string(),
        s.event_count.to_string(),
        g9(s.effort),
        g9(s.mean_abs_du),
        s.slack_at_cap.to_string(),
    ]
}

/// Trajectory, event and candidate files of one run. The returned summary is
/// recomputed from the formatted trajectory so that reading `trajectory.csv`
/// back reproduces it exactly.
pub fn write_run(
    dir: &Path,
    log: &TrajectoryLog,
    params: &AccParams,
    slack_cap: f64,
) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let rows = trajectory_rows(log);
    let path = dir.join("trajectory.csv");
    write_rows(&path, &TRAJECTORY_HEADER, rows)?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let summary = parse_trajectory(&text)?.summary(params, slack_cap);

    write_rows(
        &dir.join("events.csv"),
        &[
            "event_index",
            "t",
            "z",
            "v",
            "tau",
            "u",
            "feasible",
            "delta",
            "margin",
            "dt_inter_event",
        ],
        log.events.iter().map(|e| {
            vec![
                e.index.to_string(),
                g9(e.t),
                g9(e.state[0]),
                g9(e.state[1]),
                opt_g9(e.tau),
                g9(e.u),
                flag(e.feasible),
                opt_g9(e.delta),
                g9(e.margin),
                g9(e.dt_inter_event),
            ]
        }),
    )?;

    if log.events.iter().any(|e| e.candidates.is_some()) {
        let rows = log.events.iter().flat_map(|e| {
            e.candidates.iter().flatten().map(move |c| {
                let selected = e.feasible && e.tau == Some(c.tau);
                vec![
                    e.index.to_string(),
                    g9(e.t),
                    g9(c.tau),
                    flag(c.feasible),
                    g9(c.predicted_min_h),
                    g9(c.objective),
                    c.u.first().map(|u| g9(*u)).unwrap_or_default(),
                    if c.feasible { g9(c.delta) } else { String::new() },
                    flag(selected),
                ]
            })
        });
        write_rows(
            &dir.join("candidates.csv"),
            &[
                "event_index",
                "t",
                "tau",
                "feasible",
                "predicted_min_h",
                "objective",
                "u",
                "delta",
                "selected",
            ],
            rows,
        )?;
    }

    Ok(summary)
}

pub fn write_summary(dir: &Path, id: &str, kind: &str, status: &str, s: &RunSummary) -> Result<(), CliError> {
    write_rows(
        &dir.join("summary.csv"),
        &SUMMARY_HEADER,
        [summary_row(id, kind, status, s)],
    )
}

pub fn comparison_row(id: &str, s: &RunSummary) -> Vec<String> {
    vec![
        id.to_string(),
        g9(s.min_h),
        s.infeasible_events.to_string(),
        s.event_count.to_string(),
        g9(s.effort),
        g9(s.mean_abs_du),
    ]
}

pub fn write_comparison(path: &Path, rows: Vec<Vec<String>>) -> Result<(), CliError> {
    write_rows(path, &COMPARISON_HEADER, rows)
}

pub fn write_margin_map(path: &Path, map: &MarginMap) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let star = opt_g9(map.tau_star);
    let rows = map
        .tau_grid
        .iter()
        .zip(&map.values)
        .map(|(tau, m)| vec![g9(*tau), g9(*m), flag(*m >= 0.0), star.clone()]);
    write_rows(path, &["tau", "M", "feasible", "tau_star"], rows)
}

/// Plain-text table for the terminal.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

pub fn print(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
}
