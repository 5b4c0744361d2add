//! Closed-loop integration between events.
//!
//! An embedded Dormand-Prince 5(4) pair advances the system under a constant
//! input. Steps are truncated so that every multiple of the sample spacing is
//! hit exactly, which gives a dense record without interpolation. The first
//! accepted step whose endpoint leaves the event box is bisected to locate
//! the exit time.

use crate::error::{invalid, Error, Result};
use crate::model::{AffineSystem, State};
use crate::robust_bounds::StateBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub trigger_bisection_tol: f64,
    /// Spacing of the recorded samples, independent of internal steps.
    pub sample_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.01,
            trigger_bisection_tol: 1e-9,
            sample_dt: 0.01,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("trigger_bisection_tol", self.trigger_bisection_tol),
            ("sample_dt", self.sample_dt),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be positive, got {value}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    Trigger,
    HorizonEnd,
}

/// One inter-event interval. The first sample is the event state, the last
/// the state at `t_end`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub samples: Vec<(f64, Vec<f64>)>,
    pub exit_reason: ExitReason,
}

impl Segment {
    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("segment always has samples").1
    }
}

// Dormand-Prince 5(4) tableau. The node row is unused: the input is constant
// and the dynamics autonomous.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    model: &'a dyn AffineSystem,
    u: &'a [f64],
}

impl Stepper<'_> {
    /// One step of size `h`: fifth-order solution and the embedded error.
    fn step(&self, x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut xs = x.to_vec();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        xs[i] += h * a * kj[i];
                    }
                }
            }
            k.push(self.model.rhs(&xs, self.u));
        }
        let mut x5 = x.to_vec();
        let mut err = vec![0.0; n];
        for s in 0..7 {
            for i in 0..n {
                x5[i] += h * B5[s] * k[s][i];
                err[i] += h * (B5[s] - B4[s]) * k[s][i];
            }
        }
        (x5, err)
    }
}

fn error_norm(x: &[f64], x_new: &[f64], err: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = x.len() as f64;
    let sum: f64 = x
        .iter()
        .zip(x_new)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// First multiple of `dt` strictly after `t`.
fn next_grid_time(t: f64, dt: f64) -> f64 {
    let mut k = (t / dt).floor() + 1.0;
    while k * dt <= t + 1e-12 * (1.0 + t.abs()) {
        k += 1.0;
    }
    k * dt
}

/// Integrates under the constant input `u` from `t_start` until the state
/// leaves `bx` or `t_horizon` is reached, whichever comes first.
pub fn integrate_until_trigger(
    model: &dyn AffineSystem,
    x_k: &State,
    u: &[f64],
    bx: &StateBox,
    t_start: f64,
    t_horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Segment> {
    cfg.validate()?;
    if !(t_horizon > t_start) {
        return invalid(format!("horizon {t_horizon} must exceed start {t_start}"));
    }
    if u.len() != model.input_dim() || x_k.dim() != model.state_dim() || bx.dim() != x_k.dim() {
        return invalid("input, state and box dimensions disagree with the model");
    }

    let stepper = Stepper { model, u };
    let mut t = t_start;
    let mut x = x_k.as_slice().to_vec();
    let mut samples = vec![(t, x.clone())];
    let mut next_sample = next_grid_time(t, cfg.sample_dt);
    let mut h = cfg.max_step.min(t_horizon - t_start);
    let min_step = 1e-14 * (1.0 + t_horizon.abs());

    loop {
        let target = next_sample.min(t_horizon);
        let remaining = target - t;
        let truncated = h >= remaining;
        let h_try = if truncated { remaining } else { h };
        let (x_new, err) = stepper.step(&x, h_try);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t,
                state: x,
                reason: "non-finite state".into(),
            });
        }
        let en = error_norm(&x, &x_new, &err, cfg);
        let factor = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };

        if en > 1.0 {
            h = h_try * factor;
            if h < min_step {
                return Err(Error::Integration {
                    t,
                    state: x,
                    reason: format!("step size underflow ({h:e})"),
                });
            }
            continue;
        }

        if !bx.contains(&x_new, 0.0) {
            let (mut lo, mut hi) = (0.0, h_try);
            let mut x_hi = x_new;
            while hi - lo > cfg.trigger_bisection_tol {
                let mid = 0.5 * (lo + hi);
                let (x_mid, _) = stepper.step(&x, mid);
                if bx.contains(&x_mid, 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                    x_hi = x_mid;
                }
            }
            let t_end = t + hi;
            samples.push((t_end, x_hi));
            return Ok(Segment {
                t_start,
                t_end,
                samples,
                exit_reason: ExitReason::Trigger,
            });
        }

        x = x_new;
        if truncated {
            t = target;
            h = h.max(h_try * factor).min(cfg.max_step);
        } else {
            t += h_try;
            h = (h_try * factor).min(cfg.max_step);
        }

        if t >= t_horizon {
            samples.push((t_horizon, x));
            return Ok(Segment {
                t_start,
                t_end: t_horizon,
                samples,
                exit_reason: ExitReason::HorizonEnd,
            });
        }
        if t == next_sample {
            samples.push((t, x.clone()));
            next_sample = next_grid_time(t, cfg.sample_dt);
        }
    }
}

/// Open-loop trajectory under constant `u` over `[0, duration]` with samples
/// every `sample_dt`, both endpoints included.
pub fn integrate_open_loop(
    model: &dyn AffineSystem,
    x0: &State,
    u: &[f64],
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = model.state_dim();
    let everywhere = StateBox::new(vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])?;
    Ok(integrate_until_trigger(model, x0, u, &everywhere, 0.0, duration, cfg)?.samples)
}
