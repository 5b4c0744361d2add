//! Rollout-based selection of the Taylor-Lagrange time scale.
//!
//! Every candidate `tau_i` gets its own robust QP. Feasible candidates are
//! rolled out open-loop under their optimal input for `T_look` seconds, and
//! the candidate with the largest predicted minimum of `h` wins. Infeasible
//! candidates keep a `-inf` score. Ties go to the smallest `tau`.

use rayon::prelude::*;

use crate::controller::ControlContext;
use crate::error::{invalid, Result};
use crate::margin::{linear_grid, log_grid};
use crate::model::{AffineSystem, State};
use crate::robust_bounds::BoxLattice;
use crate::sim::{integrate_open_loop, IntegratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Spacing {
    #[default]
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSelectConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_candidates: usize,
    pub spacing: Spacing,
    pub t_look: f64,
    pub rollout_dt: f64,
    /// Evaluate candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for TauSelectConfig {
    fn default() -> Self {
        TauSelectConfig {
            tau_min: 0.05,
            tau_max: 2.0,
            n_candidates: 40,
            spacing: Spacing::Linear,
            t_look: 1.0,
            rollout_dt: 0.01,
            parallel: true,
        }
    }
}

impl TauSelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max && self.tau_max.is_finite()) {
            return invalid(format!(
                "need 0 < tau_min <= tau_max, got [{}, {}]",
                self.tau_min, self.tau_max
            ));
        }
        if self.n_candidates == 0 {
            return invalid("n_candidates must be at least 1");
        }
        if !(self.t_look > 0.0 && self.t_look.is_finite()) {
            return invalid(format!("T_look must be positive, got {}", self.t_look));
        }
        if !(self.rollout_dt > 0.0) {
            return invalid("rollout_dt must be positive");
        }
        Ok(())
    }

    pub fn candidates(&self) -> Vec<f64> {
        let mut c = match self.spacing {
            Spacing::Linear => linear_grid(self.tau_min, self.tau_max, self.n_candidates),
            Spacing::Logarithmic => log_grid(self.tau_min, self.tau_max, self.n_candidates),
        };
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub tau: f64,
    pub feasible: bool,
    /// `-inf` for infeasible candidates.
    pub predicted_min_h: f64,
    /// `+inf` for infeasible candidates.
    pub objective: f64,
    pub u: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauDecision {
    pub tau_k: f64,
    pub u_k: Vec<f64>,
    pub delta_k: f64,
    pub table: Vec<CandidateRecord>,
}

impl TauDecision {
    pub fn selected(&self) -> &CandidateRecord {
        self.table
            .iter()
            .find(|c| c.tau == self.tau_k)
            .expect("selected candidate is in the table")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauSelection {
    Selected(TauDecision),
    AllInfeasible(Vec<CandidateRecord>),
}

/// Minimum of `h` along the open-loop trajectory under constant `u` over
/// `[0, t_look]`, sampled every `sample_dt` including both endpoints.
pub fn rollout_min_h(
    x_k: &State,
    u: &[f64],
    t_look: f64,
    model: &dyn AffineSystem,
    integrator: &IntegratorConfig,
) -> Result<f64> {
    if !(t_look > 0.0) {
        return invalid(format!("rollout horizon must be positive, got {t_look}"));
    }
    let samples = integrate_open_loop(model, x_k, u, t_look, integrator)?;
    Ok(samples
        .iter()
        .map(|(_, x)| model.barrier(x))
        .fold(f64::INFINITY, f64::min))
}

fn evaluate_candidate(
    tau: f64,
    x_k: &State,
    lattice: &BoxLattice,
    cfg: &TauSelectConfig,
    ctx: &ControlContext,
    rollout: &IntegratorConfig,
) -> Result<CandidateRecord> {
    let Some(best) = ctx.solve_robust(lattice, tau)? else {
        return Ok(CandidateRecord {
            tau,
            feasible: false,
            predicted_min_h: f64::NEG_INFINITY,
            objective: f64::INFINITY,
            u: Vec::new(),
            delta: f64::NAN,
        });
    };
    let q = ctx.model().input_dim();
    let u = best.values[..q].to_vec();
    let predicted_min_h = rollout_min_h(x_k, &u, cfg.t_look, ctx.model(), rollout)?;
    Ok(CandidateRecord {
        tau,
        feasible: true,
        predicted_min_h,
        objective: best.objective,
        delta: best.values[q],
        u,
    })
}

/// Strict `>` keeps the earliest, i.e. smallest, maximizer.
fn argmax(table: &[CandidateRecord]) -> Option<&CandidateRecord> {
    let mut best: Option<&CandidateRecord> = None;
    for c in table.iter().filter(|c| c.feasible) {
        if best.is_none_or(|b| c.predicted_min_h > b.predicted_min_h) {
            best = Some(c);
        }
    }
    best
}

pub fn select_tau(
    x_k: &State,
    lattice: &BoxLattice,
    cfg: &TauSelectConfig,
    ctx: &ControlContext,
    integrator: &IntegratorConfig,
) -> Result<TauSelection> {
    cfg.validate()?;
    let candidates = cfg.candidates();
    let rollout = IntegratorConfig {
        sample_dt: cfg.rollout_dt,
        ..*integrator
    };
    let eval = |&tau: &f64| evaluate_candidate(tau, x_k, lattice, cfg, ctx, &rollout);
    let table: Vec<CandidateRecord> = if cfg.parallel {
        candidates.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        candidates.iter().map(eval).collect::<Result<_>>()?
    };

    Ok(match argmax(&table) {
        Some(best) => TauSelection::Selected(TauDecision {
            tau_k: best.tau,
            u_k: best.u.clone(),
            delta_k: best.delta,
            table: table.clone(),
        }),
        None => TauSelection::AllInfeasible(table),
    })
}
