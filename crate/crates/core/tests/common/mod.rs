#![allow(dead_code)]

use atlc_core::controller::{simulate_closed_loop, ControllerConfig, ControllerKind, TrajectoryLog};
use atlc_core::model::{AccModel, AccParams, AffineSystem, State};
use atlc_core::robust_bounds::{make_box, BoundConfig, BoxLattice, SignBranch};
use atlc_core::qp::{oracle_grid_solve, solve_qp, ConstraintRow, QpInstance, QpStatus};
use rand::rngs::StdRng;
use rand::Rng;


pub fn random_instance(rng: &mut StdRng) -> QpInstance {
    let n = rng.random_range(1..=3);
    let quadratic_diag = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    let linear_cost = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..-0.1)).collect();
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let rows = (0..rng.random_range(0..=4))
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-2.0..2.0);
            if rng.random_bool(0.5) {
                ConstraintRow::geq(a, b)
            } else {
                ConstraintRow::leq(a, b)
            }
        })
        .collect();
    QpInstance {
        quadratic_diag,
        linear_cost,
        rows,
        lower,
        upper,
    }
}

pub fn grid_points_for(dim: usize) -> usize {
    match dim {
        1 => 4001,
        2 => 201,
        _ => 41,
    }
}

/// Rows as unit-normal `a . x >= b`, plus a flag for a zero row that fails.
fn unit_rows(inst: &QpInstance) -> (Vec<(Vec<f64>, f64)>, bool) {
    let mut out = Vec::new();
    let mut dead = false;
    for row in &inst.rows {
        let (a, b) = row.as_geq();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.push((a.iter().map(|v| v / norm).collect(), b / norm));
        } else if b > 0.0 {
            dead = true;
        }
    }
    (out, dead)
}

/// Normalized minimum slack over rows and box faces.
fn normalized_slack(inst: &QpInstance, rows: &[(Vec<f64>, f64)], x: &[f64]) -> f64 {
    let mut s = f64::INFINITY;
    for (a, b) in rows {
        s = s.min(a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b);
    }
    for j in 0..inst.dim() {
        s = s.min(x[j] - inst.lower[j]).min(inst.upper[j] - x[j]);
    }
    s
}

/// Best normalized slack over the oracle grid, and the point attaining it.
fn grid_slack(inst: &QpInstance, k: usize) -> (f64, Vec<f64>) {
    let n = inst.dim();
    let axis = |j: usize, i: usize| {
        let (lo, hi) = (inst.lower[j], inst.upper[j]);
        if i == k - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (k - 1) as f64
        }
    };
    let (rows, dead) = unit_rows(inst);
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    if dead {
        return best;
    }
    for _ in 0..k.pow(n as u32) {
        for j in 0..n {
            x[j] = axis(j, idx[j]);
        }
        let s = normalized_slack(inst, &rows, &x);
        if s > best.0 {
            best = (s, x.clone());
        }
        for j in 0..n {
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
        }
    }
    best
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleTally {
    pub instances: usize,
    pub robust: usize,
    pub verdict_mismatches: usize,
    pub objective_violations: usize,
    pub worst_kkt: f64,
}

/// Compares the solver against the grid oracle on one instance.
///
/// With `r` the half-diagonal of a grid cell and `s_g` the best normalized
/// slack on the grid, the verdict is robust when `|s_g| > r`. For a robust
/// feasible instance the grid optimum exceeds the true optimum by at most
/// `theta (f(x_c) - f*) + L r` with `theta = r / s_g`, `x_c` the best-slack
/// grid point and `L` the largest gradient norm on the box.
pub fn check_against_oracle(inst: &QpInstance, tally: &mut OracleTally) {
    let n = inst.dim();
    let k = grid_points_for(n);
    let sol = solve_qp(inst).expect("solver error");
    let oracle = oracle_grid_solve(inst, k);
    tally.instances += 1;

    let r = 0.5
        * (0..n)
            .map(|j| ((inst.upper[j] - inst.lower[j]) / (k - 1) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
    let (s_g, x_c) = grid_slack(inst, k);

    if sol.is_optimal() {
        tally.worst_kkt = tally.worst_kkt.max(atlc_core::qp::kkt_residual(inst, &sol));
        if oracle.is_optimal() && sol.objective > oracle.objective + 1e-9 * (1.0 + oracle.objective.abs()) {
            tally.objective_violations += 1;
        }
    }
    if oracle.is_optimal() && !sol.is_optimal() {
        // A grid point satisfies every row, so the instance is feasible.
        tally.verdict_mismatches += 1;
        return;
    }
    if s_g.abs() <= r {
        return;
    }
    tally.robust += 1;
    let truth = if s_g > r { QpStatus::Optimal } else { QpStatus::Infeasible };
    if sol.status != truth || oracle.status != truth {
        tally.verdict_mismatches += 1;
        return;
    }
    if truth == QpStatus::Optimal {
        let theta = (r / s_g).min(1.0);
        let lip = (0..n)
            .map(|j| {
                let g = |x: f64| (2.0 * inst.quadratic_diag[j] * x + inst.linear_cost[j]).abs();
                g(inst.lower[j]).max(g(inst.upper[j])).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let bound = theta * (inst.objective(&x_c) - sol.objective).max(0.0) + lip * r;
        let gap = oracle.objective - sol.objective;
        if gap > bound + 1e-9 || gap < -1e-9 * (1.0 + sol.objective.abs()) {
            tally.objective_violations += 1;
        }
    }
}

pub fn acc_with_cd(cd: f64) -> AccParams {
    AccParams {
        decel_coeff: cd,
        ..AccParams::default()
    }
}

pub fn run(kind: ControllerKind, cd: f64) -> TrajectoryLog {
    let cfg = ControllerConfig {
        kind,
        params: acc_with_cd(cd),
        ..ControllerConfig::default()
    };
    simulate_closed_loop(&cfg).expect("closed loop run")
}

pub const TLC_TAU: f64 = 0.5;

pub fn tlc() -> ControllerKind {
    ControllerKind::TlcFixed {
        tau: TLC_TAU,
        robust: false,
    }
}

fn pointwise(m: &AccModel, x: &[f64], u: f64, tau: f64) -> f64 {
    let s = m.lie_stack(x);
    s.drift[0] + s.drift[1] * tau + (s.drift[2] + s.phi[0] * u) * tau * tau / 2.0
}

/// Counts samples where the robust row exceeds the pointwise expression.
pub fn soundness_violations(rng: &mut StdRng, boxes: usize, samples: usize) -> usize {
    let m = AccModel::new(AccParams::default()).unwrap();
    let b = m.input_bounds();
    let cfg = BoundConfig::default();
    let mut violations = 0;
    for _ in 0..boxes {
        let center = [rng.random_range(10.0..100.0), rng.random_range(0.5..30.0)];
        let r: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let bx = make_box(&State::new(center.to_vec()).unwrap(), &r, &r).unwrap();
        let tau = rng.random_range(0.05..2.0);
        let lattice = BoxLattice::new(&bx, &m, &cfg).unwrap();
        let h = lattice.h_ratlc(tau).unwrap();
        let g_up = lattice.g_ratlc(tau, &[SignBranch::NonNegative]).unwrap()[0];
        let g_down = lattice.g_ratlc(tau, &[SignBranch::Negative]).unwrap()[0];
        for _ in 0..samples {
            let x: Vec<f64> = (0..2).map(|i| rng.random_range(bx.lower()[i]..=bx.upper()[i])).collect();
            let u = rng.random_range(b.lower()[0]..b.upper()[0]);
            let g = if u >= 0.0 { g_up } else { g_down };
            let robust = g * u + h;
            let exact = pointwise(&m, &x, u, tau);
            if robust > exact + 1e-9 * (1.0 + exact.abs()) {
                violations += 1;
            }
        }
    }
    violations
}


/// Residual of the Lagrange-remainder expansion along one trajectory: true
/// when it changes sign or nearly vanishes at some sampled `xi` in `(0, tau)`.
pub fn mean_value_holds(rng: &mut StdRng) -> bool {
    use atlc_core::sim::{integrate_open_loop, IntegratorConfig};
    let m = AccModel::new(AccParams::default()).unwrap();
    let b = m.input_bounds();
    let x0 = State::acc(rng.random_range(10.0..100.0), rng.random_range(0.5..30.0)).unwrap();
    let u = rng.random_range(b.lower()[0]..b.upper()[0]);
    let tau = rng.random_range(0.05..2.0);
    let cfg = IntegratorConfig {
        sample_dt: tau / 2000.0,
        max_step: tau / 2000.0,
        ..IntegratorConfig::default()
    };
    let path = integrate_open_loop(&m, &x0, &[u], tau, &cfg).unwrap();
    let s0 = m.lie_stack(x0.as_slice());
    let h_tau = m.barrier(&path.last().unwrap().1);
    let residual: Vec<f64> = path[1..path.len() - 1]
        .iter()
        .map(|(_, x)| {
            let s = m.lie_stack(x);
            s0.drift[0] + s0.drift[1] * tau + (s.drift[2] + s.phi[0] * u) * tau * tau / 2.0 - h_tau
        })
        .collect();
    residual.iter().any(|r| r.abs() < 1e-6) || residual.windows(2).any(|w| w[0].signum() != w[1].signum())
}

/// Every pre-trigger sample inside the box inflated by `inflate`, and a
/// trigger state within `crossing_tol` of a face.
pub fn segment_contained(
    seg: &atlc_core::sim::Segment,
    bx: &atlc_core::robust_bounds::StateBox,
    inflate: f64,
    crossing_tol: f64,
) -> bool {
    use atlc_core::sim::ExitReason;
    let n = seg.samples.len();
    let inner = match seg.exit_reason {
        ExitReason::Trigger => &seg.samples[..n - 1],
        ExitReason::HorizonEnd => &seg.samples[..],
    };
    let inside = inner.iter().all(|(_, x)| bx.contains(x, inflate));
    let crossing = seg.exit_reason == ExitReason::HorizonEnd
        || (bx.boundary_distance(seg.final_state()) <= crossing_tol && !bx.contains(seg.final_state(), 0.0));
    inside && crossing
}

/// Containment of every logged segment, rebuilt from the dense records.
pub fn log_segments_contained(log: &TrajectoryLog, cfg: &ControllerConfig, inflate: f64, crossing_tol: f64) -> bool {
    for (k, e) in log.events.iter().enumerate() {
        let bx = make_box(&State::new(e.state.clone()).unwrap(), &cfg.box_under, &cfg.box_over).unwrap();
        let rows: Vec<_> = log.dense.iter().filter(|r| r.event_index == k).collect();
        let Some((last, inner)) = rows.split_last() else {
            return false;
        };
        if !inner.iter().all(|r| bx.contains(&[r.z, r.v], inflate)) {
            return false;
        }
        let triggered = k + 1 < log.events.len();
        if triggered {
            let x = [last.z, last.v];
            if bx.contains(&x, 0.0) || bx.boundary_distance(&x) > crossing_tol {
                return false;
            }
        } else if !bx.contains(&[last.z, last.v], inflate) && last.t < cfg.final_time {
            return false;
        }
    }
    true
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MarginTally {
    pub states: usize,
    pub nonincreasing: usize,
    pub prefix_violations: usize,
    pub lipschitz_violations: usize,
    pub worst_slope_ratio: f64,
}

/// Threshold and Lipschitz structure of `M(x, .)` on random event boxes.
///
/// The slope bound comes from the envelope of the drift Taylor sum and the
/// input term: `|dM/dtau| <= max_box (|L_f h| + tau_max (|L_f^2 h| + |phi| u_max))`.
pub fn margin_structure(rng: &mut StdRng, states: usize) -> MarginTally {
    use atlc_core::margin::{linear_grid, tau_star_scan};
    let m = AccModel::new(AccParams::default()).unwrap();
    let cfg = BoundConfig::default();
    let b = m.input_bounds();
    let u_max = b.lower()[0].abs().max(b.upper()[0].abs());
    let mut tally = MarginTally::default();
    for _ in 0..states {
        let x = State::acc(rng.random_range(10.0..100.0), rng.random_range(0.5..30.0)).unwrap();
        let bx = make_box(&x, &[0.5; 2], &[0.5; 2]).unwrap();
        let coarse = tau_star_scan(&bx, &linear_grid(0.05, 2.0, 40), &m, &cfg).unwrap();
        tally.states += 1;
        if coarse.is_nonincreasing() {
            tally.nonincreasing += 1;
            let feasible: Vec<bool> = coarse.feasible().collect();
            let first_infeasible = feasible.iter().position(|f| !f).unwrap_or(feasible.len());
            if feasible[first_infeasible..].iter().any(|f| *f) {
                tally.prefix_violations += 1;
            }
        }

        let mut slope_bound: f64 = 0.0;
        for i in 0..=20 {
            for j in 0..=20 {
                let p = [
                    bx.lower()[0] + (bx.upper()[0] - bx.lower()[0]) * i as f64 / 20.0,
                    bx.lower()[1] + (bx.upper()[1] - bx.lower()[1]) * j as f64 / 20.0,
                ];
                let s = m.lie_stack(&p);
                let d = s.drift[1].abs() + 2.0 * (s.drift[2].abs() + s.phi[0].abs() * u_max);
                slope_bound = slope_bound.max(d);
            }
        }
        for n in [40, 79, 157, 313] {
            let map = tau_star_scan(&bx, &linear_grid(0.05, 2.0, n), &m, &cfg).unwrap();
            for (t, v) in map.tau_grid.windows(2).zip(map.values.windows(2)) {
                let slope = (v[1] - v[0]).abs() / (t[1] - t[0]);
                tally.worst_slope_ratio = tally.worst_slope_ratio.max(slope / slope_bound);
                if slope > slope_bound * (1.0 + 1e-9) {
                    tally.lipschitz_violations += 1;
                }
            }
        }
    }
    tally
}
