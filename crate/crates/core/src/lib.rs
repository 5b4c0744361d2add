//! Event-triggered safety control with adaptive Taylor-Lagrange constraints.
//!
//! The crate covers the full pipeline for control-affine systems: Lie
//! derivative stacks ([`model`]), worst-case bounds over an event box
//! ([`robust_bounds`]), a small exact QP solver ([`qp`]), constraint rows for
//! HOCBF, fixed-scale TLC and adaptive TLC ([`constraints`]), the feasibility
//! margin ([`margin`]), rollout selection of the time scale ([`tau_select`]),
//! event-triggered integration ([`sim`]) and the closed loop ([`controller`]).

pub mod constraints;
pub mod controller;
pub mod error;
pub mod margin;
pub mod model;
pub mod qp;
pub mod robust_bounds;
pub mod sim;
pub mod tau_select;

pub use controller::{
    compute_control, fallback_control, simulate_closed_loop, ControlDecision, ControllerConfig,
    ControllerKind, FallbackPolicy, ObjectiveForm, RunFailure, TrajectoryLog,
};
pub use error::{Error, Result};
pub use model::{AccModel, AccParams, AffineSystem, ClfForm, State};
