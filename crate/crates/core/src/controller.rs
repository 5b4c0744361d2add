//! Event-triggered closed loop: measure, build the event box, solve for the
//! input, hold it until the state leaves the box, repeat until `T`.

use crate::constraints::{atlc_row, build_clf_row, build_hocbf_row, build_tlc_row, ConstraintRow};
use crate::error::{invalid, Error, Result};
use crate::margin::margin_from_lattice;
use crate::model::{resistance_force, AccModel, AccParams, AffineSystem, State};
use crate::qp::{solve_qp, QpInstance, QpSolution};
use crate::robust_bounds::{make_box, BoundConfig, BoxLattice, SignBranch};
use crate::sim::{integrate_until_trigger, ExitReason, IntegratorConfig};
use crate::tau_select::{select_tau, CandidateRecord, TauSelectConfig, TauSelection};

/// Start of the window used by the steady-phase statistics.
pub const LATE_PHASE_START: f64 = 10.0;

/// Per-event QP builder over the decision vector `(u, delta)`.
///
/// The cost is `sum_j a_j u_j^2 + b_j u_j + w delta^2`.
pub struct ControlContext<'a> {
    model: &'a dyn AffineSystem,
    x_k: State,
    quadratic_u: Vec<f64>,
    linear_u: Vec<f64>,
    clf_rate: f64,
    slack_weight: f64,
    slack_cap: f64,
}

impl<'a> ControlContext<'a> {
    /// Cost `|u|^2 + w delta^2`.
    pub fn plain(
        model: &'a dyn AffineSystem,
        x_k: State,
        clf_rate: f64,
        slack_weight: f64,
        slack_cap: f64,
    ) -> Result<Self> {
        let q = model.input_dim();
        Self::with_tracking(model, x_k, vec![0.0; q], vec![1.0; q], clf_rate, slack_weight, slack_cap)
    }

    /// Cost `sum_j ((u_j - r_j) / s_j)^2 + w delta^2`, constant dropped.
    pub fn with_tracking(
        model: &'a dyn AffineSystem,
        x_k: State,
        reference: Vec<f64>,
        scale: Vec<f64>,
        clf_rate: f64,
        slack_weight: f64,
        slack_cap: f64,
    ) -> Result<Self> {
        let q = model.input_dim();
        if reference.len() != q || scale.len() != q {
            return invalid("tracking reference and scale must match the input dimension");
        }
        if x_k.dim() != model.state_dim() {
            return invalid("state dimension disagrees with the model");
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return invalid("tracking scale must be positive");
        }
        if !(slack_weight > 0.0 && slack_cap > 0.0 && clf_rate > 0.0) {
            return invalid("CLF rate, slack weight and slack cap must be positive");
        }
        let quadratic_u: Vec<f64> = scale.iter().map(|s| 1.0 / (s * s)).collect();
        let linear_u = reference
            .iter()
            .zip(&quadratic_u)
            .map(|(r, a)| -2.0 * a * r)
            .collect();
        Ok(ControlContext {
            model,
            x_k,
            quadratic_u,
            linear_u,
            clf_rate,
            slack_weight,
            slack_cap,
        })
    }

    pub fn model(&self) -> &dyn AffineSystem {
        self.model
    }

    pub fn state(&self) -> &State {
        &self.x_k
    }

    fn instance(&self, safety: ConstraintRow, lower: Vec<f64>, upper: Vec<f64>) -> Result<QpInstance> {
        let clf = build_clf_row(&self.x_k, self.clf_rate, self.model)?;
        let mut quadratic_diag = self.quadratic_u.clone();
        quadratic_diag.push(self.slack_weight);
        let mut linear_cost = self.linear_u.clone();
        linear_cost.push(0.0);
        let (mut lower, mut upper) = (lower, upper);
        lower.push(0.0);
        upper.push(self.slack_cap);
        Ok(QpInstance {
            quadratic_diag,
            linear_cost,
            rows: vec![safety, clf],
            lower,
            upper,
        })
    }

    /// One QP with a pointwise safety row and the full input box.
    pub fn solve_pointwise(&self, safety: ConstraintRow) -> Result<Option<QpSolution>> {
        let b = self.model.input_bounds();
        let inst = self.instance(safety, b.lower().to_vec(), b.upper().to_vec())?;
        let sol = solve_qp(&inst)?;
        Ok(sol.is_optimal().then_some(sol))
    }

    /// Robust aTLC problem: one QP per sign orthant of the input box, best
    /// objective wins, the first orthant on ties.
    pub fn solve_robust(&self, lattice: &BoxLattice, tau: f64) -> Result<Option<QpSolution>> {
        let b = self.model.input_bounds();
        let mut best: Option<QpSolution> = None;
        'patterns: for pattern in SignBranch::all_patterns(b.dim()) {
            let mut lower = Vec::with_capacity(b.dim());
            let mut upper = Vec::with_capacity(b.dim());
            for (j, branch) in pattern.iter().enumerate() {
                let Some((lo, hi)) = branch.clip(b.lower()[j], b.upper()[j]) else {
                    continue 'patterns;
                };
                lower.push(lo);
                upper.push(hi);
            }
            let row = atlc_row(lattice, tau, &pattern)?;
            let sol = solve_qp(&self.instance(row, lower, upper)?)?;
            if sol.is_optimal() && best.as_ref().is_none_or(|s| sol.objective < s.objective) {
                best = Some(sol);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    Hocbf { p1: f64, p2: f64 },
    /// Fixed time scale. `robust` evaluates the row over the event box
    /// instead of at the measured state.
    TlcFixed { tau: f64, robust: bool },
    Atlc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveForm {
    /// `|u|^2 + w delta^2`.
    Plain,
    /// `((u - F_r(v)) / M)^2 + w delta^2`.
    #[default]
    AccEffort,
}

/// What to do when no admissible input exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Full braking until the next event, then re-test.
    #[default]
    MaxBraking,
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub params: AccParams,
    pub initial_state: [f64; 2],
    pub box_under: [f64; 2],
    pub box_over: [f64; 2],
    pub tau_select: TauSelectConfig,
    pub integrator: IntegratorConfig,
    pub bounds: BoundConfig,
    pub final_time: f64,
    pub objective: ObjectiveForm,
    pub fallback: FallbackPolicy,
    pub slack_cap: f64,
    /// Keep every candidate table in the event log.
    pub trace_candidates: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::Atlc,
            params: AccParams::default(),
            initial_state: [90.0, 15.0],
            box_under: [0.5, 0.5],
            box_over: [0.5, 0.5],
            tau_select: TauSelectConfig::default(),
            integrator: IntegratorConfig::default(),
            bounds: BoundConfig::default(),
            final_time: 30.0,
            objective: ObjectiveForm::AccEffort,
            fallback: FallbackPolicy::MaxBraking,
            slack_cap: 1e7,
            trace_candidates: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.tau_select.validate()?;
        self.integrator.validate()?;
        self.bounds.validate()?;
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            return invalid(format!("final time must be positive, got {}", self.final_time));
        }
        if self.initial_state.iter().any(|x| !x.is_finite()) {
            return invalid("initial state must be finite");
        }
        if self
            .box_under
            .iter()
            .chain(&self.box_over)
            .any(|r| r.is_nan() || *r < 0.0)
        {
            return invalid("box radii must be nonnegative");
        }
        if !(self.slack_cap.is_finite() && self.slack_cap > 0.0) {
            return invalid("slack cap must be positive and finite");
        }
        match self.kind {
            ControllerKind::Hocbf { p1, p2 } => {
                if !(p1 > 0.0 && p2 > 0.0 && p1.is_finite() && p2.is_finite()) {
                    return invalid(format!("HOCBF rates must be positive, got ({p1}, {p2})"));
                }
            }
            ControllerKind::TlcFixed { tau, .. } => {
                if !(tau.is_finite() && tau > 0.0) {
                    return invalid(format!("fixed time scale must be positive, got {tau}"));
                }
            }
            ControllerKind::Atlc => {}
        }
        Ok(())
    }
}

/// Outcome of one control computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// Fallback input when infeasible.
    pub u: Vec<f64>,
    /// Time scale in force, `None` for HOCBF.
    pub tau: Option<f64>,
    pub feasible: bool,
    /// `None` when infeasible.
    pub delta: Option<f64>,
    /// `sup_u` of the safety row over the admissible inputs at the decision.
    pub margin: f64,
    /// Filled for aTLC when tracing.
    pub candidates: Option<Vec<CandidateRecord>>,
}

/// Maximum braking `-c_d M g`.
pub fn fallback_control(p: &AccParams) -> f64 {
    -p.max_braking()
}

fn row_margin(row: &ConstraintRow, lower: &[f64], upper: &[f64]) -> f64 {
    let (a, b) = row.as_geq();
    let best: f64 = a
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(a, (lo, hi))| if *a > 0.0 { a * hi } else { a * lo })
        .sum();
    best - b
}

fn context<'a>(model: &'a AccModel, x: &State, cfg: &ControllerConfig) -> Result<ControlContext<'a>> {
    let p = model.params();
    match cfg.objective {
        ObjectiveForm::Plain => {
            ControlContext::plain(model, x.clone(), p.clf_rate, p.slack_weight, cfg.slack_cap)
        }
        ObjectiveForm::AccEffort => ControlContext::with_tracking(
            model,
            x.clone(),
            vec![resistance_force(x[1], p)],
            vec![p.mass],
            p.clf_rate,
            p.slack_weight,
            cfg.slack_cap,
        ),
    }
}

fn compute_with_model(model: &AccModel, x_k: &State, cfg: &ControllerConfig) -> Result<ControlDecision> {
    let ctx = context(model, x_k, cfg)?;
    let bounds = model.input_bounds();
    let (lo, hi) = (bounds.lower(), bounds.upper());
    // Full input box, slack column left at zero.
    let slack_lo = [lo[0], 0.0];
    let slack_hi = [hi[0], 0.0];
    let fallback = vec![fallback_control(model.params())];

    let lattice = || -> Result<BoxLattice> {
        let bx = make_box(x_k, &cfg.box_under, &cfg.box_over)?;
        BoxLattice::new(&bx, model, &cfg.bounds)
    };

    let (tau, row_solution, margin, candidates) = match cfg.kind {
        ControllerKind::Hocbf { p1, p2 } => {
            let row = build_hocbf_row(x_k, p1, p2, model)?;
            let margin = row_margin(&row, &slack_lo, &slack_hi);
            (None, ctx.solve_pointwise(row)?, margin, None)
        }
        ControllerKind::TlcFixed { tau, robust: false } => {
            let row = build_tlc_row(x_k, tau, model)?;
            let margin = row_margin(&row, &slack_lo, &slack_hi);
            (Some(tau), ctx.solve_pointwise(row)?, margin, None)
        }
        ControllerKind::TlcFixed { tau, robust: true } => {
            let lat = lattice()?;
            let margin = margin_from_lattice(&lat, tau, bounds)?;
            (Some(tau), ctx.solve_robust(&lat, tau)?, margin, None)
        }
        ControllerKind::Atlc => {
            let lat = lattice()?;
            let selection = select_tau(x_k, &lat, &cfg.tau_select, &ctx, &cfg.integrator)?;
            match selection {
                TauSelection::Selected(d) => {
                    let margin = margin_from_lattice(&lat, d.tau_k, bounds)?;
                    let sel = d.selected().clone();
                    let candidates = cfg.trace_candidates.then_some(d.table);
                    return Ok(ControlDecision {
                        u: sel.u,
                        tau: Some(sel.tau),
                        feasible: true,
                        delta: Some(sel.delta),
                        margin,
                        candidates,
                    });
                }
                TauSelection::AllInfeasible(table) => {
                    // Report the least negative margin over the candidates.
                    let margin = table
                        .iter()
                        .map(|c| margin_from_lattice(&lat, c.tau, bounds))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                    return Ok(ControlDecision {
                        u: fallback,
                        tau: None,
                        feasible: false,
                        delta: None,
                        margin,
                        candidates: cfg.trace_candidates.then_some(table),
                    });
                }
            }
        }
    };

    Ok(match row_solution {
        Some(sol) => ControlDecision {
            u: sol.values[..1].to_vec(),
            tau,
            feasible: true,
            delta: Some(sol.values[1]),
            margin,
            candidates,
        },
        None => ControlDecision {
            u: fallback,
            tau,
            feasible: false,
            delta: None,
            margin,
            candidates,
        },
    })
}

/// Input at an event state. Infeasibility is reported in the decision, with
/// the fallback input filled in.
pub fn compute_control(x_k: &State, cfg: &ControllerConfig) -> Result<ControlDecision> {
    cfg.validate()?;
    let model = AccModel::new(cfg.params.clone())?;
    compute_with_model(&model, x_k, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub index: usize,
    pub t: f64,
    pub state: Vec<f64>,
    pub tau: Option<f64>,
    pub u: f64,
    pub feasible: bool,
    pub delta: Option<f64>,
    pub margin: f64,
    /// Time to the next event or to the horizon.
    pub dt_inter_event: f64,
    pub candidates: Option<Vec<CandidateRecord>>,
}

/// One dense sample. `is_event` marks the first sample of a segment; the last
/// sample of a segment repeats the next event's time with the old input.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRecord {
    pub t: f64,
    pub z: f64,
    pub v: f64,
    pub u: f64,
    pub h: f64,
    pub clf: f64,
    pub event_index: usize,
    pub is_event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub min_h: f64,
    pub infeasible_events: usize,
    pub event_count: usize,
    /// Trapezoid integral of `((u - F_r(v)) / M)^2`.
    pub effort: f64,
    /// Mean `|u_{k+1} - u_k|` over consecutive events.
    pub mean_abs_du: f64,
    /// Events whose slack reached the cap.
    pub slack_at_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub events: Vec<EventRecord>,
    pub dense: Vec<DenseRecord>,
    pub summary: RunSummary,
}

impl TrajectoryLog {
    pub fn events_after(&self, t0: f64) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(move |e| e.t >= t0)
    }

    pub fn event_count_after(&self, t0: f64) -> usize {
        self.events_after(t0).count()
    }

    /// Mean `|Δu|` over consecutive events that both occur at or after `t0`.
    pub fn mean_abs_du_after(&self, t0: f64) -> f64 {
        let u: Vec<f64> = self.events_after(t0).map(|e| e.u).collect();
        mean_abs_diff(&u)
    }
}

pub fn mean_abs_diff(u: &[f64]) -> f64 {
    if u.len() < 2 {
        return 0.0;
    }
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (u.len() - 1) as f64
}

/// Summary statistics of a logged run. Only logged columns are used, so the
/// same call reproduces the summary from a log read back from disk.
pub fn summarize(
    dense: &[DenseRecord],
    event_inputs: &[f64],
    infeasible_events: usize,
    slack_at_cap: usize,
    params: &AccParams,
) -> RunSummary {
    let min_h = dense.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
    let rate = |r: &DenseRecord| {
        let a = (r.u - resistance_force(r.v, params)) / params.mass;
        a * a
    };
    let effort = dense
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (rate(&w[0]) + rate(&w[1])))
        .sum();
    RunSummary {
        min_h,
        infeasible_events,
        event_count: event_inputs.len(),
        effort,
        mean_abs_du: mean_abs_diff(event_inputs),
        slack_at_cap,
    }
}

/// A run that stopped early, with everything logged up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub log: TrajectoryLog,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} events)", self.error, self.log.events.len())
    }
}

impl std::error::Error for RunFailure {}

struct Recorder<'a> {
    model: &'a AccModel,
    events: Vec<EventRecord>,
    dense: Vec<DenseRecord>,
}

impl Recorder<'_> {
    fn push_sample(&mut self, t: f64, x: &[f64], u: f64, event_index: usize, is_event: bool) {
        self.dense.push(DenseRecord {
            t,
            z: x[0],
            v: x[1],
            u,
            h: self.model.barrier(x),
            clf: self.model.clf(x).value,
            event_index,
            is_event,
        });
    }

    fn finish(self, slack_cap: f64) -> TrajectoryLog {
        let inputs: Vec<f64> = self.events.iter().map(|e| e.u).collect();
        let infeasible = self.events.iter().filter(|e| !e.feasible).count();
        let at_cap = self
            .events
            .iter()
            .filter(|e| e.delta.is_some_and(|d| d >= slack_cap))
            .count();
        let summary = summarize(&self.dense, &inputs, infeasible, at_cap, self.model.params());
        TrajectoryLog {
            events: self.events,
            dense: self.dense,
            summary,
        }
    }
}

/// Runs the event-triggered loop from the configured initial state to `T`.
pub fn simulate_closed_loop(cfg: &ControllerConfig) -> std::result::Result<TrajectoryLog, RunFailure> {
    let empty = || TrajectoryLog {
        events: Vec::new(),
        dense: Vec::new(),
        summary: summarize(&[], &[], 0, 0, &cfg.params),
    };
    let fail = |error| RunFailure { error, log: empty() };
    cfg.validate().map_err(fail)?;
    let model = AccModel::new(cfg.params.clone()).map_err(fail)?;
    let x0 = State::acc(cfg.initial_state[0], cfg.initial_state[1]).map_err(fail)?;

    let mut rec = Recorder {
        model: &model,
        events: Vec::new(),
        dense: Vec::new(),
    };
    match run_loop(&model, x0, cfg, &mut rec) {
        Ok(()) => Ok(rec.finish(cfg.slack_cap)),
        Err(error) => Err(RunFailure {
            error,
            log: rec.finish(cfg.slack_cap),
        }),
    }
}

fn run_loop(model: &AccModel, x0: State, cfg: &ControllerConfig, rec: &mut Recorder) -> Result<()> {
    let mut x_k = x0;
    let mut t_k = 0.0;
    loop {
        let k = rec.events.len();
        let decision = compute_with_model(model, &x_k, cfg)?;
        if !decision.feasible && cfg.fallback == FallbackPolicy::Abort {
            return Err(Error::InfeasibleAbort { t: t_k });
        }
        let u = decision.u[0];
        rec.events.push(EventRecord {
            index: k,
            t: t_k,
            state: x_k.as_slice().to_vec(),
            tau: decision.tau,
            u,
            feasible: decision.feasible,
            delta: decision.delta,
            margin: decision.margin,
            dt_inter_event: 0.0,
            candidates: decision.candidates,
        });

        let bx = make_box(&x_k, &cfg.box_under, &cfg.box_over)?;
        let seg = integrate_until_trigger(model, &x_k, &decision.u, &bx, t_k, cfg.final_time, &cfg.integrator)?;
        rec.events[k].dt_inter_event = seg.t_end - seg.t_start;
        let last = seg.samples.len() - 1;
        for (i, (t, x)) in seg.samples.iter().enumerate() {
            rec.push_sample(*t, x, u, k, i == 0);
            if i == last && seg.exit_reason == ExitReason::HorizonEnd {
                return Ok(());
            }
        }

        let gap = seg.t_end - t_k;
        if gap < cfg.integrator.trigger_bisection_tol {
            return Err(Error::Zeno {
                previous: t_k,
                current: seg.t_end,
                min_gap: cfg.integrator.trigger_bisection_tol,
            });
        }
        t_k = seg.t_end;
        x_k = State::new(seg.final_state().to_vec())?;
    }
}
