//! Scenario files: flat JSON objects whose keys follow the case-study names.

use std::path::{Path, PathBuf};

use atlc_core::controller::{ControllerConfig, ControllerKind, FallbackPolicy, ObjectiveForm};
use atlc_core::model::{AccParams, ClfForm};
use atlc_core::tau_select::Spacing;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Atlc,
    #[serde(alias = "tlc")]
    TlcFixed,
    Hocbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Uniform(f64),
    PerAxis([f64; 2]),
}

impl Radius {
    fn axes(self) -> [f64; 2] {
        match self {
            Radius::Uniform(r) => [r, r],
            Radius::PerAxis(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Plain,
    AccEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clf {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    MaxBraking,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSpacing {
    Linear,
    #[serde(alias = "log")]
    Logarithmic,
}

/// Every key a scenario file may contain. Missing keys take the case-study
/// defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub id: Option<String>,
    pub vp: f64,
    pub vd: f64,
    #[serde(rename = "M")]
    pub mass: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub lp: f64,
    pub g: f64,
    pub c3: f64,
    pub w: f64,
    pub ca: f64,
    pub cd: f64,
    pub z0: f64,
    pub v0: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    pub spacing: TauSpacing,
    #[serde(rename = "T_look")]
    pub t_look: f64,
    pub box_under: Radius,
    pub box_over: Radius,
    #[serde(rename = "T")]
    pub final_time: f64,
    pub kind: Kind,
    pub p1: f64,
    pub p2: f64,
    pub tau_fixed: f64,
    pub tlc_robust: bool,
    pub objective: Objective,
    pub clf_form: Clf,
    pub fallback: Fallback,
    pub grid_points: usize,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let p = AccParams::default();
        let c = ControllerConfig::default();
        ScenarioFile {
            id: None,
            vp: p.lead_speed,
            vd: p.desired_speed,
            mass: p.mass,
            f0: p.f0,
            f1: p.f1,
            f2: p.f2,
            lp: p.min_gap,
            g: p.gravity,
            c3: p.clf_rate,
            w: p.slack_weight,
            ca: p.accel_coeff,
            cd: p.decel_coeff,
            z0: c.initial_state[0],
            v0: c.initial_state[1],
            tau_min: c.tau_select.tau_min,
            tau_max: c.tau_select.tau_max,
            n_tau: c.tau_select.n_candidates,
            spacing: TauSpacing::Linear,
            t_look: c.tau_select.t_look,
            box_under: Radius::Uniform(0.5),
            box_over: Radius::Uniform(0.5),
            final_time: c.final_time,
            kind: Kind::Atlc,
            p1: 0.5,
            p2: 0.5,
            tau_fixed: 0.5,
            tlc_robust: false,
            objective: Objective::AccEffort,
            clf_form: Clf::Quadratic,
            fallback: Fallback::MaxBraking,
            grid_points: c.bounds.grid_points_per_axis,
        }
    }
}

impl ScenarioFile {
    pub fn controller_config(&self) -> ControllerConfig {
        let base = ControllerConfig::default();
        let kind = match self.kind {
            Kind::Atlc => ControllerKind::Atlc,
            Kind::TlcFixed => ControllerKind::TlcFixed {
                tau: self.tau_fixed,
                robust: self.tlc_robust,
            },
            Kind::Hocbf => ControllerKind::Hocbf {
                p1: self.p1,
                p2: self.p2,
            },
        };
        ControllerConfig {
            kind,
            params: AccParams {
                mass: self.mass,
                lead_speed: self.vp,
                desired_speed: self.vd,
                f0: self.f0,
                f1: self.f1,
                f2: self.f2,
                min_gap: self.lp,
                gravity: self.g,
                accel_coeff: self.ca,
                decel_coeff: self.cd,
                clf_rate: self.c3,
                slack_weight: self.w,
                clf_form: match self.clf_form {
                    Clf::Linear => ClfForm::Linear,
                    Clf::Quadratic => ClfForm::Quadratic,
                },
            },
            initial_state: [self.z0, self.v0],
            box_under: self.box_under.axes(),
            box_over: self.box_over.axes(),
            tau_select: atlc_core::tau_select::TauSelectConfig {
                tau_min: self.tau_min,
                tau_max: self.tau_max,
                n_candidates: self.n_tau,
                spacing: match self.spacing {
                    TauSpacing::Linear => Spacing::Linear,
                    TauSpacing::Logarithmic => Spacing::Logarithmic,
                },
                t_look: self.t_look,
                ..base.tau_select
            },
            bounds: atlc_core::robust_bounds::BoundConfig {
                grid_points_per_axis: self.grid_points,
                ..base.bounds
            },
            final_time: self.final_time,
            objective: match self.objective {
                Objective::Plain => ObjectiveForm::Plain,
                Objective::AccEffort => ObjectiveForm::AccEffort,
            },
            fallback: match self.fallback {
                Fallback::MaxBraking => FallbackPolicy::MaxBraking,
                Fallback::Abort => FallbackPolicy::Abort,
            },
            ..base
        }
    }
}

/// A parsed scenario with the id settled and the controller config checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub path: PathBuf,
    pub file: ScenarioFile,
    pub config: ControllerConfig,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

/// Splits `key=value`; the value is read as JSON and falls back to a string.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override `{raw}` has an empty key")));
    }
    let value = serde_json::from_str(value.trim()).unwrap_or_else(|_| Value::String(value.trim().to_string()));
    Ok((key.to_string(), value))
}

pub fn parse_scenario(text: &str, path: &Path, overrides: &[(String, Value)]) -> Result<Scenario, CliError> {
    let shown = path.display();
    // A direct pass reports unknown keys and bad values with their line.
    if let Err(e) = serde_json::from_str::<ScenarioFile>(text) {
        return Err(CliError::Config(format!("{shown}: {e}")));
    }
    let mut object: Map<String, Value> = match serde_json::from_str(text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(CliError::Config(format!("{shown}: top level must be a JSON object"))),
        Err(e) => return Err(CliError::Config(format!("{shown}: {e}"))),
    };
    let keys: Vec<&str> = overrides.iter().map(|(k, _)| k.as_str()).collect();
    for (k, v) in overrides {
        object.insert(k.clone(), v.clone());
    }
    let file: ScenarioFile = serde_json::from_value(Value::Object(object)).map_err(|e| {
        CliError::Config(format!("{shown} with --set {}: {e}", keys.join(", ")))
    })?;
    let id = match &file.id {
        Some(id) => id.clone(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    if !valid_id(&id) {
        return Err(CliError::Config(format!(
            "{shown}: scenario id `{id}` must be nonempty and use only letters, digits, `-`, `_` or `.`"
        )));
    }
    let config = file.controller_config();
    config
        .validate()
        .map_err(|e| CliError::Config(format!("{shown}: {e}")))?;
    Ok(Scenario {
        id,
        path: path.to_path_buf(),
        file,
        config,
    })
}

pub fn load_scenario(path: &Path, overrides: &[(String, Value)]) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, path, overrides)
}

/// Every `*.json` file of a directory, parsed up front and checked for
/// duplicate ids.
pub fn load_suite(dir: &Path) -> Result<Vec<Scenario>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("{}: no scenario files (*.json)", dir.display())));
    }
    let scenarios = paths
        .iter()
        .map(|p| load_scenario(p, &[]))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, a) in scenarios.iter().enumerate() {
        if let Some(b) = scenarios[..i].iter().find(|b| b.id == a.id) {
            return Err(CliError::Config(format!(
                "duplicate scenario id `{}` in {} and {}",
                a.id,
                b.path.display(),
                a.path.display()
            )));
        }
    }
    Ok(scenarios)
}
