//! Feasibility margin `M(x, tau) = sup_{u in U} (G_ratlc u + h_ratlc)` and the
//! minimal feasible time scale on a grid.

use crate::error::{invalid, Result};
use crate::model::{AffineSystem, InputBounds};
use crate::robust_bounds::{BoundConfig, BoxLattice, SignBranch, StateBox};

/// Margin from a precomputed lattice. The supremum of a linear form over each
/// sign orthant of the input box sits at a vertex, so each branch is closed form.
pub fn margin_from_lattice(lattice: &BoxLattice, tau: f64, bounds: &InputBounds) -> Result<f64> {
    let h = lattice.h_ratlc(tau)?;
    let mut best = f64::NEG_INFINITY;
    'patterns: for pattern in SignBranch::all_patterns(bounds.dim()) {
        let g = lattice.g_ratlc(tau, &pattern)?;
        let mut value = h;
        for (j, branch) in pattern.iter().enumerate() {
            let Some((lo, hi)) = branch.clip(bounds.lower()[j], bounds.upper()[j]) else {
                continue 'patterns;
            };
            value += if g[j] > 0.0 { g[j] * hi } else { g[j] * lo };
        }
        best = best.max(value);
    }
    Ok(best)
}

pub fn margin(bx: &StateBox, tau: f64, model: &dyn AffineSystem, cfg: &BoundConfig) -> Result<f64> {
    let lattice = BoxLattice::new(bx, model, cfg)?;
    margin_from_lattice(&lattice, tau, model.input_bounds())
}

/// `U(x, tau)` is nonempty exactly when the margin is nonnegative.
pub fn is_feasible(bx: &StateBox, tau: f64, model: &dyn AffineSystem, cfg: &BoundConfig) -> Result<bool> {
    Ok(margin(bx, tau, model, cfg)? >= 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginMap {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// First grid point with a nonnegative margin.
    pub tau_star: Option<f64>,
}

impl MarginMap {
    pub fn feasible(&self) -> impl Iterator<Item = bool> + '_ {
        self.values.iter().map(|m| *m >= 0.0)
    }

    /// Margin never increases from one grid point to the next.
    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

fn check_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return invalid("time-scale grid is empty");
    }
    if tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return invalid("time-scale grid must be positive");
    }
    if tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("time-scale grid must be strictly increasing");
    }
    Ok(())
}

pub fn tau_star_scan(
    bx: &StateBox,
    tau_grid: &[f64],
    model: &dyn AffineSystem,
    cfg: &BoundConfig,
) -> Result<MarginMap> {
    check_grid(tau_grid)?;
    let lattice = BoxLattice::new(bx, model, cfg)?;
    let values = tau_grid
        .iter()
        .map(|&tau| margin_from_lattice(&lattice, tau, model.input_bounds()))
        .collect::<Result<Vec<_>>>()?;
    let tau_star = tau_grid
        .iter()
        .zip(&values)
        .find(|(_, m)| **m >= 0.0)
        .map(|(t, _)| *t);
    Ok(MarginMap {
        tau_grid: tau_grid.to_vec(),
        values,
        tau_star,
    })
}

/// Narrows the grid estimate of `tau*` by bisection between the last
/// infeasible grid point before it and the first feasible one.
pub fn refine_tau_star(
    map: &MarginMap,
    bx: &StateBox,
    model: &dyn AffineSystem,
    cfg: &BoundConfig,
    tol: f64,
) -> Result<Option<f64>> {
    let Some(star) = map.tau_star else {
        return Ok(None);
    };
    let pos = map.tau_grid.iter().position(|t| *t == star).unwrap_or(0);
    if pos == 0 {
        return Ok(Some(star));
    }
    let lattice = BoxLattice::new(bx, model, cfg)?;
    let (mut lo, mut hi) = (map.tau_grid[pos - 1], star);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if margin_from_lattice(&lattice, mid, model.input_bounds())? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `n` points spaced linearly over `[lo, hi]`, both endpoints included.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// `n` points spaced geometrically over `[lo, hi]`, both endpoints included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln();
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo * (ratio * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}
