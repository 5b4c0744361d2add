//! Affine control systems `x' = f(x) + g(x) u` together with the Lie-derivative
//! quantities the safety and convergence constraints are built from.
//!
//! The only concrete system shipped here is the adaptive-cruise-control (ACC)
//! vehicle model with state `(z, v)`: gap to the lead vehicle and ego speed.

use crate::error::{invalid, Result};

/// A point in the state space. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return invalid("state must have at least one component");
        }
        if x.iter().any(|c| !c.is_finite()) {
            return invalid(format!("state has non-finite entries: {x:?}"));
        }
        Ok(State(x))
    }

    /// ACC state from gap `z` [m] and ego speed `v` [m/s].
    pub fn acc(z: f64, v: f64) -> Result<Self> {
        Self::new(vec![z, v])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Componentwise input limits `u_min <= u <= u_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return invalid("input bounds must be nonempty and of equal length");
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return invalid(format!("bad input interval [{lo}, {hi}]"));
            }
        }
        Ok(InputBounds { lower, upper })
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
}

/// Lie derivatives of the barrier `h` along the dynamics at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct LieStack {
    /// `h, L_f h, ..., L_f^m h`, so `m + 1` entries.
    pub drift: Vec<f64>,
    /// `L_g L_f^{m-1} h`, one entry per input. This is the only place the
    /// input enters the m-th derivative of `h`.
    pub phi: Vec<f64>,
}

impl LieStack {
    pub fn relative_degree(&self) -> usize {
        self.drift.len() - 1
    }

    /// Taylor polynomial of `h` to order `m` without the input term:
    /// `sum_{i<=m} L_f^i h tau^i / i!`.
    pub fn drift_taylor(&self, tau: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for (i, d) in self.drift.iter().enumerate() {
            if i > 0 {
                term *= tau / i as f64;
            }
            sum += d * term;
        }
        sum
    }
}

/// CLF value and its Lie derivatives at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfTerms {
    pub value: f64,
    pub lf: f64,
    pub lg: Vec<f64>,
}

/// An input-affine system with a scalar barrier `h` of relative degree `m`
/// and a relative-degree-one CLF `V`.
///
/// All evaluators are pure, so implementors are shared freely across threads.
pub trait AffineSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn relative_degree(&self) -> usize;

    /// `f(x)`.
    fn drift(&self, x: &[f64]) -> Vec<f64>;

    /// `g(x)` as `n` rows of `q` entries.
    fn actuation(&self, x: &[f64]) -> Vec<Vec<f64>>;

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = self.drift(x);
        for (dxi, row) in dx.iter_mut().zip(self.actuation(x)) {
            *dxi += row.iter().zip(u).map(|(g, u)| g * u).sum::<f64>();
        }
        dx
    }

    fn barrier(&self, x: &[f64]) -> f64;

    fn lie_stack(&self, x: &[f64]) -> LieStack;

    fn clf(&self, x: &[f64]) -> ClfTerms;

    fn input_bounds(&self) -> &InputBounds;
}

/// Shape of the speed-tracking CLF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClfForm {
    /// `V = v - vd`, signed.
    Linear,
    /// `V = (v - vd)^2`.
    #[default]
    Quadratic,
}

/// Physical and tuning constants of the ACC case study.
#[derive(Debug, Clone, PartialEq)]
pub struct AccParams {
    pub mass: f64,
    pub lead_speed: f64,
    pub desired_speed: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub min_gap: f64,
    pub gravity: f64,
    pub accel_coeff: f64,
    pub decel_coeff: f64,
    pub clf_rate: f64,
    pub slack_weight: f64,
    pub clf_form: ClfForm,
}

impl Default for AccParams {
    fn default() -> Self {
        AccParams {
            mass: 1650.0,
            lead_speed: 13.89,
            desired_speed: 24.0,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            min_gap: 10.0,
            gravity: 9.81,
            accel_coeff: 0.4,
            decel_coeff: 0.4,
            clf_rate: 2.0,
            slack_weight: 1e5,
            clf_form: ClfForm::Quadratic,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.mass),
            ("vp", self.lead_speed),
            ("vd", self.desired_speed),
            ("lp", self.min_gap),
            ("g", self.gravity),
            ("ca", self.accel_coeff),
            ("cd", self.decel_coeff),
            ("c3", self.clf_rate),
            ("w", self.slack_weight),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be positive and finite, got {value}"));
            }
        }
        for (name, value) in [("f0", self.f0), ("f1", self.f1), ("f2", self.f2)] {
            if !(value.is_finite() && value >= 0.0) {
                return invalid(format!("{name} must be nonnegative and finite, got {value}"));
            }
        }
        Ok(())
    }

    /// Largest braking force `c_d M g`, as a positive number.
    pub fn max_braking(&self) -> f64 {
        self.decel_coeff * self.mass * self.gravity
    }

    pub fn max_traction(&self) -> f64 {
        self.accel_coeff * self.mass * self.gravity
    }
}

/// Rolling and aerodynamic resistance `f0 sgn(v) + f1 v + f2 v^2`, with `sgn(0) = 0`.
pub fn resistance_force(v: f64, p: &AccParams) -> f64 {
    let sgn = if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    };
    p.f0 * sgn + p.f1 * v + p.f2 * v * v
}

/// `(z', v') = (vp - v, (u - F_r(v)) / M)`.
pub fn acc_dynamics_rhs(x: &State, u: f64, p: &AccParams) -> [f64; 2] {
    let v = x[1];
    [p.lead_speed - v, (u - resistance_force(v, p)) / p.mass]
}

/// `(h, L_f h, L_f^2 h, L_g L_f h)` for `h = z - lp`.
pub fn acc_lie_stack(x: &State, p: &AccParams) -> (f64, f64, f64, f64) {
    let (z, v) = (x[0], x[1]);
    (
        z - p.min_gap,
        p.lead_speed - v,
        resistance_force(v, p) / p.mass,
        -1.0 / p.mass,
    )
}

/// `(V, L_f V, L_g V)` of the speed CLF.
pub fn acc_clf_terms(x: &State, p: &AccParams) -> (f64, f64, f64) {
    let v = x[1];
    let e = v - p.desired_speed;
    let fr = resistance_force(v, p);
    match p.clf_form {
        ClfForm::Quadratic => (e * e, -2.0 * e * fr / p.mass, 2.0 * e / p.mass),
        ClfForm::Linear => (e, -fr / p.mass, 1.0 / p.mass),
    }
}

/// The ACC vehicle as an [`AffineSystem`] with `n = 2`, `q = 1`, `m = 2`.
#[derive(Debug, Clone)]
pub struct AccModel {
    params: AccParams,
    bounds: InputBounds,
}

impl AccModel {
    pub fn new(params: AccParams) -> Result<Self> {
        params.validate()?;
        let bounds = InputBounds::new(vec![-params.max_braking()], vec![params.max_traction()])?;
        Ok(AccModel { params, bounds })
    }

    pub fn params(&self) -> &AccParams {
        &self.params
    }
}

impl AffineSystem for AccModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn relative_degree(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.params;
        vec![p.lead_speed - x[1], -resistance_force(x[1], p) / p.mass]
    }

    fn actuation(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        vec![vec![0.0], vec![1.0 / self.params.mass]]
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let p = &self.params;
        vec![p.lead_speed - x[1], (u[0] - resistance_force(x[1], p)) / p.mass]
    }

    fn barrier(&self, x: &[f64]) -> f64 {
        x[0] - self.params.min_gap
    }

    fn lie_stack(&self, x: &[f64]) -> LieStack {
        let p = &self.params;
        LieStack {
            drift: vec![
                x[0] - p.min_gap,
                p.lead_speed - x[1],
                resistance_force(x[1], p) / p.mass,
            ],
            phi: vec![-1.0 / p.mass],
        }
    }

    fn clf(&self, x: &[f64]) -> ClfTerms {
        let p = &self.params;
        let e = x[1] - p.desired_speed;
        let fr = resistance_force(x[1], p);
        match p.clf_form {
            ClfForm::Quadratic => ClfTerms {
                value: e * e,
                lf: -2.0 * e * fr / p.mass,
                lg: vec![2.0 * e / p.mass],
            },
            ClfForm::Linear => ClfTerms {
                value: e,
                lf: -fr / p.mass,
                lg: vec![1.0 / p.mass],
            },
        }
    }

    fn input_bounds(&self) -> &InputBounds {
        &self.bounds
    }
}
