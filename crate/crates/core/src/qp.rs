//! Small dense strictly convex QPs with a diagonal Hessian:
//!
//! ```text
//!     minimize    sum_i d_i x_i^2 + c_i x_i
//!     subject to  a_r . x  (>= | <=)  b_r     for every row r
//!                 lower <= x <= upper
//! ```
//!
//! [`solve_qp`] enumerates active sets exhaustively, which is exact and fast
//! for the handful of variables and rows the controllers produce.
//! [`oracle_grid_solve`] is a brute-force reference used by tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Relative primal tolerance used to accept candidate points.
const FEAS_TOL: f64 = 1e-9;
/// Relative dual tolerance on multiplier signs.
const DUAL_TOL: f64 = 1e-9;
/// Reciprocal condition below which an active set is skipped.
const RCOND_MIN: f64 = 1e-12;
/// Upper cap on the phase-1 slack variable so the LP stays bounded.
const SLACK_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Geq,
    Leq,
}

/// One linear inequality `coefficients . x (sense) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
    pub sense: Sense,
}

impl ConstraintRow {
    pub fn geq(coefficients: Vec<f64>, rhs: f64) -> Self {
        ConstraintRow {
            coefficients,
            rhs,
            sense: Sense::Geq,
        }
    }

    pub fn leq(coefficients: Vec<f64>, rhs: f64) -> Self {
        ConstraintRow {
            coefficients,
            rhs,
            sense: Sense::Leq,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(a, x)| a * x).sum()
    }

    /// Signed slack, nonnegative exactly when the row holds.
    pub fn slack(&self, x: &[f64]) -> f64 {
        match self.sense {
            Sense::Geq => self.lhs(x) - self.rhs,
            Sense::Leq => self.rhs - self.lhs(x),
        }
    }

    /// The row rewritten as `a . x >= b`.
    pub fn as_geq(&self) -> (Vec<f64>, f64) {
        match self.sense {
            Sense::Geq => (self.coefficients.clone(), self.rhs),
            Sense::Leq => (self.coefficients.iter().map(|a| -a).collect(), -self.rhs),
        }
    }

    fn scale_at(&self, x: &[f64]) -> f64 {
        1.0 + self.rhs.abs()
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(a, x)| (a * x).abs())
                .sum::<f64>()
    }

    /// Row holds up to a tolerance relative to the magnitude of its terms.
    pub fn holds(&self, x: &[f64], rel_tol: f64) -> bool {
        self.slack(x) >= -rel_tol * self.scale_at(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    pub quadratic_diag: Vec<f64>,
    pub linear_cost: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpInstance {
    pub fn dim(&self) -> usize {
        self.quadratic_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return invalid("QP needs at least one variable");
        }
        if self.linear_cost.len() != n || self.lower.len() != n || self.upper.len() != n {
            return invalid(format!(
                "QP vectors disagree on dimension {n}: linear {}, lower {}, upper {}",
                self.linear_cost.len(),
                self.lower.len(),
                self.upper.len()
            ));
        }
        for (i, d) in self.quadratic_diag.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                return invalid(format!("quadratic weight {i} must be positive, got {d}"));
            }
        }
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi || !self.linear_cost[i].is_finite() {
                return invalid(format!("variable {i} has bad bounds [{lo}, {hi}] or cost"));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coefficients.len() != n {
                return invalid(format!(
                    "row {r} has {} coefficients, expected {n}",
                    row.coefficients.len()
                ));
            }
            if !row.rhs.is_finite() || row.coefficients.iter().any(|a| !a.is_finite()) {
                return invalid(format!("row {r} has non-finite entries"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.quadratic_diag.iter().zip(&self.linear_cost))
            .map(|(x, (d, c))| d * x * x + c * x)
            .sum()
    }

    /// All rows hold (relative tolerance) and `x` lies in the box
    /// (absolute tolerance scaled by the bound magnitude).
    pub fn is_feasible(&self, x: &[f64], rel_tol: f64) -> bool {
        let in_box = x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| {
            *x >= lo - rel_tol * (1.0 + lo.abs()) && *x <= hi + rel_tol * (1.0 + hi.abs())
        });
        in_box && self.rows.iter().all(|r| r.holds(x, rel_tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Empty when infeasible.
    pub values: Vec<f64>,
    /// `+inf` when infeasible.
    pub objective: f64,
    pub status: QpStatus,
    /// Multipliers of the rows in their `>=` form, one per row.
    pub row_multipliers: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
}

impl QpSolution {
    fn infeasible(n_rows: usize, n: usize) -> Self {
        QpSolution {
            values: Vec::new(),
            objective: f64::INFINITY,
            status: QpStatus::Infeasible,
            row_multipliers: vec![0.0; n_rows],
            lower_multipliers: vec![0.0; n],
            upper_multipliers: vec![0.0; n],
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
enum Tag {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

/// Every constraint in `a . x >= b` form, rows first, then bound faces.
fn halfspaces(inst: &QpInstance) -> Vec<(Vec<f64>, f64, Tag)> {
    let n = inst.dim();
    let mut out = Vec::with_capacity(inst.rows.len() + 2 * n);
    for (r, row) in inst.rows.iter().enumerate() {
        let (a, b) = row.as_geq();
        out.push((a, b, Tag::Row(r)));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        out.push((e.clone(), inst.lower[j], Tag::Lower(j)));
        e[j] = -1.0;
        out.push((e, -inst.upper[j], Tag::Upper(j)));
    }
    out
}

/// Calls `f` with every `k`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

struct Candidate {
    x: Vec<f64>,
    objective: f64,
    multipliers: Vec<(usize, f64)>,
}

/// Solves the equality-constrained subproblem for one active set and keeps it
/// when it is primal feasible with nonnegative multipliers.
fn try_active_set(
    inst: &QpInstance,
    spaces: &[(Vec<f64>, f64, Tag)],
    active: &[usize],
) -> Option<Candidate> {
    let n = inst.dim();
    let hinv: Vec<f64> = inst.quadratic_diag.iter().map(|d| 0.5 / d).collect();
    // Unconstrained stationary point x0 = -H^{-1} c.
    let x0: Vec<f64> = inst
        .linear_cost
        .iter()
        .zip(&hinv)
        .map(|(c, h)| -c * h)
        .collect();

    let k = active.len();
    let mut lambda = vec![0.0; k];
    if k > 0 {
        let mut s = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for (p, &i) in active.iter().enumerate() {
            let (ai, bi, _) = &spaces[i];
            rhs[p] = bi - ai.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>();
            for (q, &j) in active.iter().enumerate() {
                let aj = &spaces[j].0;
                s[(p, q)] = (0..n).map(|t| ai[t] * hinv[t] * aj[t]).sum();
            }
        }
        // Jacobi equilibration keeps rows of very different scale comparable.
        let mut d = vec![0.0; k];
        for p in 0..k {
            if s[(p, p)] <= 0.0 {
                return None;
            }
            d[p] = 1.0 / s[(p, p)].sqrt();
        }
        for p in 0..k {
            rhs[p] *= d[p];
            for q in 0..k {
                s[(p, q)] *= d[p] * d[q];
            }
        }
        if rcond(&s) < RCOND_MIN {
            return None;
        }
        let mu = s.lu().solve(&rhs)?;
        for p in 0..k {
            lambda[p] = mu[p] * d[p];
        }
    }

    let mut x = x0.clone();
    for (p, &i) in active.iter().enumerate() {
        let ai = &spaces[i].0;
        for t in 0..n {
            x[t] += hinv[t] * ai[t] * lambda[p];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Active bound faces hold exactly, not up to the rounding of the solve.
    for &i in active {
        match spaces[i].2 {
            Tag::Lower(j) => x[j] = inst.lower[j],
            Tag::Upper(j) => x[j] = inst.upper[j],
            Tag::Row(_) => {}
        }
    }

    let grad_scale = 1.0
        + x.iter()
            .zip(inst.quadratic_diag.iter().zip(&inst.linear_cost))
            .map(|(x, (d, c))| (2.0 * d * x).abs().max(c.abs()))
            .fold(0.0, f64::max);
    for (p, &i) in active.iter().enumerate() {
        let norm = spaces[i].0.iter().map(|a| a.abs()).fold(0.0, f64::max);
        if lambda[p] * norm < -DUAL_TOL * grad_scale {
            return None;
        }
    }

    for (i, (a, b, _)) in spaces.iter().enumerate() {
        if active.contains(&i) {
            continue;
        }
        let lhs: f64 = a.iter().zip(&x).map(|(a, x)| a * x).sum();
        let scale = 1.0 + b.abs() + a.iter().zip(&x).map(|(a, x)| (a * x).abs()).sum::<f64>();
        if lhs - b < -FEAS_TOL * scale {
            return None;
        }
    }
    // Only rounding-level bound violations survive the check above.
    for j in 0..n {
        x[j] = x[j].clamp(inst.lower[j], inst.upper[j]);
    }

    Some(Candidate {
        objective: inst.objective(&x),
        x,
        multipliers: active
            .iter()
            .zip(&lambda)
            .map(|(&i, &l)| (i, l.max(0.0)))
            .collect(),
    })
}

/// Global optimum by exhaustive active-set enumeration.
///
/// Returns `QpStatus::Infeasible` only when the phase-1 margin certifies that
/// no point satisfies all rows inside the box.
pub fn solve_qp(inst: &QpInstance) -> Result<QpSolution> {
    inst.validate()?;
    let n = inst.dim();
    let spaces = halfspaces(inst);
    let mut best: Option<Candidate> = None;
    for k in 0..=n.min(spaces.len()) {
        for_each_subset(spaces.len(), k, |active| {
            if let Some(c) = try_active_set(inst, &spaces, active) {
                if best.as_ref().is_none_or(|b| c.objective < b.objective) {
                    best = Some(c);
                }
            }
        });
    }

    let Some(best) = best else {
        let margin = feasibility_margin(inst)?;
        if margin < -FEAS_TOL {
            return Ok(QpSolution::infeasible(inst.rows.len(), n));
        }
        return Err(Error::DegenerateQp { margin });
    };

    let mut sol = QpSolution {
        values: best.x,
        objective: best.objective,
        status: QpStatus::Optimal,
        row_multipliers: vec![0.0; inst.rows.len()],
        lower_multipliers: vec![0.0; n],
        upper_multipliers: vec![0.0; n],
    };
    for (i, l) in best.multipliers {
        match spaces[i].2 {
            Tag::Row(r) => sol.row_multipliers[r] = l,
            Tag::Lower(j) => sol.lower_multipliers[j] = l,
            Tag::Upper(j) => sol.upper_multipliers[j] = l,
        }
    }
    Ok(sol)
}

/// Largest achievable minimum normalized row slack over the box:
/// `max_{x in box} min_r slack_r(x) / |a_r|`, capped at 1.
///
/// Nonnegative exactly when the instance is feasible. Solved as an LP by
/// enumerating the vertices of `{(x, s) : a_r.x - |a_r| s >= b_r, box, s <= 1}`.
pub fn feasibility_margin(inst: &QpInstance) -> Result<f64> {
    inst.validate()?;
    let n = inst.dim();
    let mut spaces: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut constant_margin = SLACK_CAP;
    for row in &inst.rows {
        let (a, b) = row.as_geq();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            constant_margin = constant_margin.min(-b);
            continue;
        }
        let mut y: Vec<f64> = a.iter().map(|v| v / norm).collect();
        y.push(-1.0);
        spaces.push((y, b / norm));
    }
    if constant_margin < 0.0 || spaces.is_empty() {
        return Ok(constant_margin);
    }
    for j in 0..n {
        let mut e = vec![0.0; n + 1];
        e[j] = 1.0;
        spaces.push((e.clone(), inst.lower[j]));
        e[j] = -1.0;
        spaces.push((e, -inst.upper[j]));
    }
    let mut cap = vec![0.0; n + 1];
    cap[n] = -1.0;
    spaces.push((cap, -SLACK_CAP));

    let dim = n + 1;
    let mut best = f64::NEG_INFINITY;
    for_each_subset(spaces.len(), dim, |active| {
        let a = DMatrix::from_fn(dim, dim, |p, q| spaces[active[p]].0[q]);
        if rcond(&a) < RCOND_MIN {
            return;
        }
        let b = DVector::from_fn(dim, |p, _| spaces[active[p]].1);
        let Some(y) = a.lu().solve(&b) else {
            return;
        };
        let ok = spaces.iter().all(|(ai, bi)| {
            let lhs: f64 = ai.iter().zip(y.iter()).map(|(a, y)| a * y).sum();
            lhs - bi >= -FEAS_TOL * (1.0 + bi.abs() + y.amax())
        });
        if ok {
            best = best.max(y[n]);
        }
    });
    Ok(best.min(constant_margin))
}

/// Brute-force reference: best feasible point of a tensor grid over the box.
///
/// Test-only in spirit; it costs `points_per_axis^dim` objective evaluations.
pub fn oracle_grid_solve(inst: &QpInstance, points_per_axis: usize) -> QpSolution {
    let n = inst.dim();
    let k = points_per_axis.max(1);
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let (lo, hi) = (inst.lower[j], inst.upper[j]);
            if lo == hi || k == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k)
                    .map(|i| {
                        if i == k - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            }
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..total {
        for j in 0..n {
            x[j] = axes[j][idx[j]];
        }
        if inst.rows.iter().all(|r| r.holds(&x, 1e-12)) {
            let f = inst.objective(&x);
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((x.clone(), f));
            }
        }
        for j in 0..n {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    match best {
        Some((values, objective)) => QpSolution {
            values,
            objective,
            status: QpStatus::Optimal,
            row_multipliers: Vec::new(),
            lower_multipliers: Vec::new(),
            upper_multipliers: Vec::new(),
        },
        None => QpSolution::infeasible(0, 0),
    }
}

/// Largest violation of the KKT conditions at an optimal solution, each term
/// relative to the magnitude of the quantities it compares.
pub fn kkt_residual(inst: &QpInstance, sol: &QpSolution) -> f64 {
    let n = inst.dim();
    let x = &sol.values;
    let mut worst: f64 = 0.0;

    for j in 0..n {
        let hx = 2.0 * inst.quadratic_diag[j] * x[j];
        let mut dual = sol.lower_multipliers[j] - sol.upper_multipliers[j];
        let mut scale = 1.0 + hx.abs() + inst.linear_cost[j].abs() + dual.abs();
        for (row, l) in inst.rows.iter().zip(&sol.row_multipliers) {
            let (a, _) = row.as_geq();
            dual += l * a[j];
            scale += (l * a[j]).abs();
        }
        worst = worst.max((hx + inst.linear_cost[j] - dual).abs() / scale);
    }

    for (row, l) in inst.rows.iter().zip(&sol.row_multipliers) {
        let slack = row.slack(x);
        let scale = 1.0 + row.rhs.abs() + row.lhs(x).abs();
        worst = worst.max((-slack).max(0.0) / scale);
        worst = worst.max((-l).max(0.0));
        worst = worst.max((l * slack).abs() / (scale * (1.0 + l.abs())));
    }
    for j in 0..n {
        let lo_slack = x[j] - inst.lower[j];
        let hi_slack = inst.upper[j] - x[j];
        let scale = 1.0 + inst.lower[j].abs().max(inst.upper[j].abs());
        worst = worst.max((-lo_slack).max(0.0) / scale);
        worst = worst.max((-hi_slack).max(0.0) / scale);
        let ml = sol.lower_multipliers[j];
        let mu = sol.upper_multipliers[j];
        worst = worst.max((-ml).max(0.0)).max((-mu).max(0.0));
        worst = worst.max((ml * lo_slack).abs() / (scale * (1.0 + ml.abs())));
        worst = worst.max((mu * hi_slack).abs() / (scale * (1.0 + mu.abs())));
    }
    worst
}
