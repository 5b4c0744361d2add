//! Inequality rows for each controller variant, over the decision vector
//! `(u_1, ..., u_q, delta)`.

use crate::error::{invalid, Result};
use crate::model::{AffineSystem, State};
use crate::robust_bounds::{BoundConfig, BoxLattice, SignBranch, StateBox};

pub use crate::qp::{ConstraintRow, Sense};

fn with_slack_column(mut coefficients: Vec<f64>, slack: f64) -> Vec<f64> {
    coefficients.push(slack);
    coefficients
}

/// Robust aTLC row `G_ratlc(branch) u + h_ratlc >= 0` from a precomputed lattice.
pub fn atlc_row(lattice: &BoxLattice, tau: f64, branch: &[SignBranch]) -> Result<ConstraintRow> {
    let g = lattice.g_ratlc(tau, branch)?;
    let h = lattice.h_ratlc(tau)?;
    Ok(ConstraintRow::geq(with_slack_column(g, 0.0), -h))
}

pub fn build_atlc_rows(
    bx: &StateBox,
    tau: f64,
    model: &dyn AffineSystem,
    cfg: &BoundConfig,
    branch: &[SignBranch],
) -> Result<ConstraintRow> {
    let lattice = BoxLattice::new(bx, model, cfg)?;
    atlc_row(&lattice, tau, branch)
}

/// Pointwise fixed-time-scale TLC row, normalized by `tau^m / m!`:
///
/// `phi u >= -(L_f^m h + sum_{i<m} (m!/i!) tau^{i-m} L_f^i h)`.
///
/// For `m = 2` this is `L_f^2 h + L_g L_f h u + (2/tau) L_f h + (2/tau^2) h >= 0`.
pub fn build_tlc_row(x: &State, tau: f64, model: &dyn AffineSystem) -> Result<ConstraintRow> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("TLC time scale must be positive, got {tau}"));
    }
    let stack = model.lie_stack(x.as_slice());
    let m = stack.relative_degree();
    let mut drift = stack.drift[m];
    // (m!/i!) tau^{i-m} built downward from i = m - 1.
    let mut factor = 1.0;
    for i in (0..m).rev() {
        factor *= (i + 1) as f64 / tau;
        drift += factor * stack.drift[i];
    }
    Ok(ConstraintRow::geq(with_slack_column(stack.phi, 0.0), -drift))
}

/// Second-order HOCBF row
/// `L_f^2 h + L_g L_f h u + (p1 + p2) L_f h + p1 p2 h >= 0`.
pub fn build_hocbf_row(
    x: &State,
    p1: f64,
    p2: f64,
    model: &dyn AffineSystem,
) -> Result<ConstraintRow> {
    if !(p1 > 0.0 && p2 > 0.0 && p1.is_finite() && p2.is_finite()) {
        return invalid(format!("HOCBF rates must be positive, got ({p1}, {p2})"));
    }
    if model.relative_degree() != 2 {
        return invalid("the HOCBF row is only defined for relative degree two");
    }
    let s = model.lie_stack(x.as_slice());
    let drift = s.drift[2] + (p1 + p2) * s.drift[1] + p1 * p2 * s.drift[0];
    Ok(ConstraintRow::geq(with_slack_column(s.phi, 0.0), -drift))
}

/// Relaxed CLF row `L_g V u - delta <= -(L_f V + c3 V)`.
pub fn build_clf_row(x: &State, c3: f64, model: &dyn AffineSystem) -> Result<ConstraintRow> {
    if !(c3.is_finite() && c3 > 0.0) {
        return invalid(format!("CLF rate must be positive, got {c3}"));
    }
    let terms = model.clf(x.as_slice());
    Ok(ConstraintRow::leq(
        with_slack_column(terms.lg, -1.0),
        -(terms.lf + c3 * terms.value),
    ))
}
