//! Worst-case Taylor-Lagrange quantities over the event hyperrectangle.
//!
//! The minimum of the drift Taylor sum and the componentwise extrema of
//! `phi = L_g L_f^{m-1} h` are taken over a tensor lattice of the box. The
//! lattice is the same for every time scale, so [`BoxLattice`] evaluates the
//! Lie stacks once and then answers queries for any `tau` cheaply.

use crate::error::{invalid, Result};
use crate::model::{AffineSystem, LieStack, State};

/// Axis-aligned set `{x : lower <= x <= upper}`.
///
/// Infinite extents are allowed so a trigger can be disabled; the robust
/// bounds require a finite box.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return invalid("box bounds must be nonempty and of equal length");
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return invalid(format!("bad box interval [{lo}, {hi}]"));
            }
        }
        Ok(StateBox { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| b.is_finite())
    }

    /// Closed-set membership with every face pushed out by `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (lo, hi))| *xi >= lo - tol && *xi <= hi + tol)
    }

    /// Smallest distance from `x` to any face, measured per coordinate.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(xi, (lo, hi))| (xi - lo).abs().min((hi - xi).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `S(x_k) = {x : x_k - under <= x <= x_k + over}`.
pub fn make_box(x_k: &State, under: &[f64], over: &[f64]) -> Result<StateBox> {
    let n = x_k.dim();
    if under.len() != n || over.len() != n {
        return invalid(format!(
            "box radii have lengths {} and {}, state has {n}",
            under.len(),
            over.len()
        ));
    }
    if under.iter().chain(over).any(|r| r.is_nan() || *r < 0.0) {
        return invalid(format!("box radii must be nonnegative: {under:?}, {over:?}"));
    }
    let x = x_k.as_slice();
    StateBox::new(
        x.iter().zip(under).map(|(c, r)| c - r).collect(),
        x.iter().zip(over).map(|(c, r)| c + r).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundConfig {
    pub grid_points_per_axis: usize,
    /// Endpoint-inclusive lattice when set; cell-midpoint lattice otherwise.
    pub include_vertices: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            grid_points_per_axis: 21,
            include_vertices: true,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_axis < 2 {
            return invalid("grid_points_per_axis must be at least 2");
        }
        Ok(())
    }
}

/// Sign of an input component, selecting the min or max branch of `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignBranch {
    NonNegative,
    Negative,
}

impl SignBranch {
    /// Every sign pattern over `q` inputs, in a fixed order.
    pub fn all_patterns(q: usize) -> Vec<Vec<SignBranch>> {
        (0..1usize << q)
            .map(|mask| {
                (0..q)
                    .map(|j| {
                        if mask >> j & 1 == 0 {
                            SignBranch::NonNegative
                        } else {
                            SignBranch::Negative
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Intersection of `[lo, hi]` with this orthant, if nonempty.
    pub fn clip(self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let (a, b) = match self {
            SignBranch::NonNegative => (lo.max(0.0), hi),
            SignBranch::Negative => (lo, hi.min(0.0)),
        };
        (a <= b).then_some((a, b))
    }
}

fn axis_points(lo: f64, hi: f64, k: usize, include_vertices: bool) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let width = hi - lo;
    if include_vertices {
        (0..k)
            .map(|i| {
                if i == k - 1 {
                    hi
                } else {
                    lo + width * i as f64 / (k - 1) as f64
                }
            })
            .collect()
    } else {
        (0..k)
            .map(|i| lo + width * (i as f64 + 0.5) / k as f64)
            .collect()
    }
}

/// Lie stacks evaluated on a tensor lattice of a box.
#[derive(Debug, Clone)]
pub struct BoxLattice {
    stacks: Vec<LieStack>,
    phi_min: Vec<f64>,
    phi_max: Vec<f64>,
    relative_degree: usize,
}

impl BoxLattice {
    pub fn new(bx: &StateBox, model: &dyn AffineSystem, cfg: &BoundConfig) -> Result<Self> {
        cfg.validate()?;
        if bx.dim() != model.state_dim() {
            return invalid(format!(
                "box dimension {} does not match state dimension {}",
                bx.dim(),
                model.state_dim()
            ));
        }
        if !bx.is_finite() {
            return invalid("robust bounds need a finite box");
        }
        let axes: Vec<Vec<f64>> = bx
            .lower()
            .iter()
            .zip(bx.upper())
            .map(|(lo, hi)| axis_points(*lo, *hi, cfg.grid_points_per_axis, cfg.include_vertices))
            .collect();

        let total: usize = axes.iter().map(Vec::len).product();
        let mut stacks = Vec::with_capacity(total);
        let mut index = vec![0usize; axes.len()];
        let mut point = vec![0.0; axes.len()];
        for _ in 0..total {
            for (d, axis) in axes.iter().enumerate() {
                point[d] = axis[index[d]];
            }
            stacks.push(model.lie_stack(&point));
            for d in 0..axes.len() {
                index[d] += 1;
                if index[d] < axes[d].len() {
                    break;
                }
                index[d] = 0;
            }
        }

        let q = model.input_dim();
        let mut phi_min = vec![f64::INFINITY; q];
        let mut phi_max = vec![f64::NEG_INFINITY; q];
        for s in &stacks {
            for j in 0..q {
                phi_min[j] = phi_min[j].min(s.phi[j]);
                phi_max[j] = phi_max[j].max(s.phi[j]);
            }
        }
        Ok(BoxLattice {
            stacks,
            phi_min,
            phi_max,
            relative_degree: model.relative_degree(),
        })
    }

    pub fn len(&self) -> usize {
        self.stacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stacks.is_empty()
    }

    /// `tau^m / m!`.
    pub fn input_scale(&self, tau: f64) -> f64 {
        (1..=self.relative_degree).fold(1.0, |acc, i| acc * tau / i as f64)
    }

    /// Joint minimum of the drift Taylor sum over the lattice.
    pub fn h_ratlc(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self
            .stacks
            .iter()
            .map(|s| s.drift_taylor(tau))
            .fold(f64::INFINITY, f64::min))
    }

    /// Worst-case input row: min of `phi_j` on the nonnegative branch, max on
    /// the negative one, scaled by `tau^m / m!`.
    pub fn g_ratlc(&self, tau: f64, branch: &[SignBranch]) -> Result<Vec<f64>> {
        check_tau(tau)?;
        if branch.len() != self.phi_min.len() {
            return invalid(format!(
                "sign pattern has {} entries, model has {} inputs",
                branch.len(),
                self.phi_min.len()
            ));
        }
        let scale = self.input_scale(tau);
        Ok(branch
            .iter()
            .enumerate()
            .map(|(j, b)| match b {
                SignBranch::NonNegative => scale * self.phi_min[j],
                SignBranch::Negative => scale * self.phi_max[j],
            })
            .collect())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("time scale must be positive, got {tau}"));
    }
    Ok(())
}

pub fn h_ratlc(bx: &StateBox, tau: f64, model: &dyn AffineSystem, cfg: &BoundConfig) -> Result<f64> {
    check_tau(tau)?;
    BoxLattice::new(bx, model, cfg)?.h_ratlc(tau)
}

pub fn g_ratlc(
    bx: &StateBox,
    tau: f64,
    model: &dyn AffineSystem,
    branch: &[SignBranch],
    cfg: &BoundConfig,
) -> Result<Vec<f64>> {
    check_tau(tau)?;
    BoxLattice::new(bx, model, cfg)?.g_ratlc(tau, branch)
}
