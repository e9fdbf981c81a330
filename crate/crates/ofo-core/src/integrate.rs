//! Time integration of projected dynamical systems.
//!
//! The right-hand side of a projected system is discontinuous on box faces,
//! which rules out classical high-order error estimates there. The stepper
//! therefore uses explicit projected Euler substeps with step-doubling error
//! control: a full step and two half steps (each followed by Euclidean
//! projection of the endpoint onto the box) are compared, the committed state
//! is the Richardson combination of the two, projected once more. Feasibility
//! of every committed sample is exact by construction.

use crate::geometry::{project_tangent, BoxSet, GeometryError, BOX_MEMBERSHIP_TOL};
use crate::scalar::{inf_dist, inf_norm, Scalar};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {time} (step {step:e}); field too stiff for the tolerance")]
    StepUnderflow { time: f64, step: f64 },
    #[error("non-finite field value at t = {time}")]
    NonFiniteField { time: f64 },
    #[error("no equilibrium within max_time = {max_time}: residual {residual:e}")]
    NotSettled { residual: f64, max_time: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Step-size and horizon configuration for one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig<S> {
    pub initial_step: S,
    pub max_step: S,
    pub error_tolerance: S,
    pub max_time: S,
    pub start_time: S,
    /// Minimum spacing between recorded samples; `None` records every
    /// accepted step. The first and last samples are always recorded.
    pub record_interval: Option<S>,
}

impl<S: Scalar> StepConfig<S> {
    /// Defaults for a horizon of `max_time`: tolerance 1e-6, free max step.
    pub fn until(max_time: S) -> Self {
        Self {
            initial_step: S::of(1e-3).min(max_time * S::of(1e-2)),
            max_step: max_time,
            error_tolerance: S::of(1e-6),
            max_time,
            start_time: S::zero(),
            record_interval: None,
        }
    }

    pub fn with_tolerance(mut self, tol: S) -> Self {
        self.error_tolerance = tol;
        self
    }

    pub fn with_max_step(mut self, max_step: S) -> Self {
        self.max_step = max_step;
        self.initial_step = self.initial_step.min(max_step);
        self
    }

    pub fn with_record_interval(mut self, interval: S) -> Self {
        self.record_interval = Some(interval);
        self
    }

    pub fn with_start_time(mut self, start: S) -> Self {
        self.start_time = start;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let ok = self.initial_step > S::zero()
            && self.max_step > S::zero()
            && self.error_tolerance > S::zero()
            && self.max_time > S::zero()
            && self.initial_step <= self.max_step;
        if ok {
            Ok(())
        } else {
            Err(IntegrateError::StepUnderflow {
                time: self.start_time.as_f64(),
                step: self.initial_step.as_f64(),
            })
        }
    }
}

/// Sampled solution of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    times: Vec<S>,
    states: Vec<Vec<S>>,
    labels: Vec<String>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn new(labels: Vec<String>) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            labels,
        }
    }

    pub fn push(&mut self, t: S, state: Vec<S>) {
        debug_assert!(self.times.last().map_or(true, |last| *last < t));
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<S>] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn final_time(&self) -> S {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn final_state(&self) -> &[S] {
        self.states.last().expect("non-empty trajectory")
    }

    /// Values of one state coordinate across all samples.
    pub fn column(&self, i: usize) -> Vec<S> {
        self.states.iter().map(|s| s[i]).collect()
    }
}

/// Equilibrium located by [`settle`].
#[derive(Debug, Clone)]
pub struct Settled<S> {
    pub state: Vec<S>,
    /// Infinity norm of the projected field at `state`.
    pub residual: S,
    pub time: S,
}

struct Stepper<'a, S, F> {
    field: F,
    boxset: &'a BoxSet<S>,
    t: S,
    x: Vec<S>,
    f_current: Vec<S>,
    h: S,
    tol: S,
    max_step: S,
    end: S,
    h_floor: S,
}

impl<'a, S: Scalar, F: FnMut(S, &[S]) -> Vec<S>> Stepper<'a, S, F> {
    fn new(
        mut field: F,
        boxset: &'a BoxSet<S>,
        x0: &[S],
        config: &StepConfig<S>,
    ) -> Result<Self, IntegrateError> {
        config.validate()?;
        let x = boxset.clamp_within(x0, S::of(BOX_MEMBERSHIP_TOL))?;
        let f_current = eval_finite(&mut field, config.start_time, &x)?;
        let end = config.start_time + config.max_time;
        Ok(Self {
            field,
            boxset,
            t: config.start_time,
            x,
            f_current,
            h: config.initial_step.min(config.max_step),
            tol: config.error_tolerance,
            max_step: config.max_step,
            end,
            h_floor: config.max_time.max(S::one()) * S::of(1e-14),
        })
    }

    fn done(&self) -> bool {
        self.t >= self.end
    }

    /// Projected Euler advance by a step of `h`.
    fn euler(&self, from: &[S], f: &[S], h: S) -> Vec<S> {
        let raw: Vec<S> = from
            .iter()
            .zip(f)
            .map(|(x, fx)| *x + h * *fx)
            .collect();
        self.boxset.project(&raw)
    }

    /// Takes one accepted step, shrinking the trial step as needed.
    fn step(&mut self) -> Result<(), IntegrateError> {
        let mut h = self.h.min(self.end - self.t).min(self.max_step);
        let half = S::of(0.5);
        let mut rejections = 0usize;
        loop {
            if h < self.h_floor {
                return Err(IntegrateError::StepUnderflow {
                    time: self.t.as_f64(),
                    step: h.as_f64(),
                });
            }
            let x_full = self.euler(&self.x, &self.f_current, h);
            let x_half = self.euler(&self.x, &self.f_current, h * half);
            let f_half = eval_finite(&mut self.field, self.t + h * half, &x_half)?;
            let x_two = self.euler(&x_half, &f_half, h * half);
            let err = inf_dist(&x_full, &x_two);
            if err <= self.tol {
                // Richardson combination of the 1x and 2x half-step results,
                // clamped back onto the box.
                let combined: Vec<S> = x_two
                    .iter()
                    .zip(&x_full)
                    .map(|(fine, coarse)| *fine + *fine - *coarse)
                    .collect();
                self.x = self.boxset.project(&combined);
                self.t = self.t + h;
                if self.end - self.t <= self.h_floor {
                    self.t = self.end;
                }
                self.f_current = eval_finite(&mut self.field, self.t, &self.x)?;
                let grow = if err > S::zero() {
                    (S::of(0.9) * (self.tol / err).sqrt()).min(S::of(5.0))
                } else {
                    S::of(5.0)
                };
                self.h = (h * grow.max(S::of(0.2))).min(self.max_step);
                return Ok(());
            }
            let shrink = (S::of(0.9) * (self.tol / err).sqrt()).max(S::of(0.2));
            h = h * shrink;
            rejections += 1;
            if rejections > 200 {
                return Err(IntegrateError::StepUnderflow {
                    time: self.t.as_f64(),
                    step: h.as_f64(),
                });
            }
        }
    }

    /// Residual of the projected field at the current state.
    fn residual(&self) -> Result<S, IntegrateError> {
        Ok(inf_norm(&project_tangent(
            &self.x,
            &self.f_current,
            self.boxset,
        )?))
    }
}

fn eval_finite<S: Scalar, F: FnMut(S, &[S]) -> Vec<S>>(
    field: &mut F,
    t: S,
    x: &[S],
) -> Result<Vec<S>, IntegrateError> {
    let f = field(t, x);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteField { time: t.as_f64() });
    }
    Ok(f)
}

/// Integrates `dx = Pi_box(x, field(t, x))` from `x0` over the configured
/// horizon. Pass [`BoxSet::unbounded`] for unconstrained coordinates.
pub fn integrate_projected<S: Scalar, F: FnMut(S, &[S]) -> Vec<S>>(
    field: F,
    boxset: &BoxSet<S>,
    x0: &[S],
    config: &StepConfig<S>,
) -> Result<Trajectory<S>, IntegrateError> {
    let mut stepper = Stepper::new(field, boxset, x0, config)?;
    let mut traj = Trajectory::new(Vec::new());
    traj.push(stepper.t, stepper.x.clone());
    let mut last_recorded = stepper.t;
    while !stepper.done() {
        stepper.step()?;
        let due = match config.record_interval {
            None => true,
            Some(interval) => stepper.t - last_recorded >= interval,
        };
        if due || stepper.done() {
            if stepper.t > last_recorded {
                traj.push(stepper.t, stepper.x.clone());
                last_recorded = stepper.t;
            }
        }
    }
    Ok(traj)
}

/// Integrates until the projected residual drops below `residual_tol`,
/// returning the first such state. When the residual stalls above the target
/// (the adaptive stepper hovering at its stability boundary), the per-step
/// tolerance is tightened and integration continues; reaching `max_time`
/// without settling is the `NotSettled` outcome.
pub fn settle<S: Scalar, F: FnMut(S, &[S]) -> Vec<S>>(
    field: F,
    boxset: &BoxSet<S>,
    x0: &[S],
    residual_tol: S,
    max_time: S,
) -> Result<Settled<S>, IntegrateError> {
    let config = StepConfig::until(max_time);
    let mut stepper = Stepper::new(field, boxset, x0, &config)?;
    let tol_floor = S::of(1e-15);
    let window = 200usize;
    let mut steps_in_window = 0usize;
    let mut window_start_residual = stepper.residual()?;
    if window_start_residual < residual_tol {
        return Ok(Settled {
            state: stepper.x,
            residual: window_start_residual,
            time: stepper.t,
        });
    }
    while !stepper.done() {
        stepper.step()?;
        let res = stepper.residual()?;
        if res < residual_tol {
            return Ok(Settled {
                state: stepper.x,
                residual: res,
                time: stepper.t,
            });
        }
        steps_in_window += 1;
        if steps_in_window >= window {
            // Residual not halved over the window: per-step accuracy is the
            // bottleneck, tighten it.
            if res > window_start_residual * S::of(0.5) && stepper.tol > tol_floor {
                stepper.tol = (stepper.tol * S::of(0.1)).max(tol_floor);
            }
            window_start_residual = res;
            steps_in_window = 0;
        }
    }
    let res = stepper.residual()?;
    if res < residual_tol {
        Ok(Settled {
            state: stepper.x,
            residual: res,
            time: stepper.t,
        })
    } else {
        Err(IntegrateError::NotSettled {
            residual: res.as_f64(),
            max_time: max_time.as_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_interval() -> BoxSet<f64> {
        BoxSet::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn saturating_ramp_hits_upper_face() {
        let b = unit_interval();
        let cfg = StepConfig::until(1.0);
        let traj = integrate_projected(|_, _| vec![1.0], &b, &[0.5], &cfg).unwrap();
        assert_eq!(traj.final_time(), 1.0);
        assert_relative_eq!(traj.final_state()[0], 1.0, epsilon = 1e-12);
        // closed form min(0.5 + t, 1), within 10x the step tolerance
        for (t, s) in traj.times().iter().zip(traj.states()) {
            let exact = (0.5 + t).min(1.0);
            assert!((s[0] - exact).abs() <= 10.0 * cfg.error_tolerance);
        }
    }

    #[test]
    fn flow_blocked_at_lower_face() {
        let b = unit_interval();
        let traj =
            integrate_projected(|_, _| vec![-1.0], &b, &[0.0], &StepConfig::until(1.0)).unwrap();
        for s in traj.states() {
            assert_eq!(s[0], 0.0);
        }
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let b = BoxSet::unbounded(1);
        let cfg = StepConfig::until(1.0);
        let traj = integrate_projected(|_, x| vec![-x[0]], &b, &[1.0], &cfg).unwrap();
        assert!((traj.final_state()[0] - (-1.0_f64).exp()).abs() < cfg.error_tolerance);
    }

    #[test]
    fn refinement_consistency() {
        let b = BoxSet::unbounded(1);
        let coarse = StepConfig::until(1.0).with_tolerance(1e-6);
        let fine = StepConfig::until(1.0).with_tolerance(5e-7);
        let a: Trajectory<f64> = integrate_projected(|_, x| vec![-x[0]], &b, &[1.0], &coarse).unwrap();
        let c = integrate_projected(|_, x| vec![-x[0]], &b, &[1.0], &fine).unwrap();
        assert!((a.final_state()[0] - c.final_state()[0]).abs() < 1e-6);
    }

    #[test]
    fn trajectory_stays_in_box() {
        let b = unit_interval();
        // oscillating drift pushing against both faces
        let traj = integrate_projected(
            |t: f64, _: &[f64]| vec![(8.0 * t).sin() * 10.0],
            &b,
            &[0.2],
            &StepConfig::until(3.0),
        )
        .unwrap();
        for s in traj.states() {
            assert!(s[0] >= 0.0 && s[0] <= 1.0);
        }
    }

    #[test]
    fn settle_linear_decay() {
        let b = BoxSet::unbounded(1);
        let settled = settle(|_, x: &[f64]| vec![-x[0]], &b, &[1.0], 1e-9, 100.0).unwrap();
        assert!(settled.state[0].abs() < 1e-8);
        assert!(settled.residual < 1e-9);
    }

    #[test]
    fn settle_pinned_on_face() {
        let b = unit_interval();
        let settled = settle(|_, _: &[f64]| vec![1.0], &b, &[0.0], 1e-9, 10.0).unwrap();
        assert_relative_eq!(settled.state[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn settle_two_state_plant() {
        // dx1 = -x1 + x2 + u + 0.9 w, dx2 = 0.5 x1 - x2, with u = w = 1:
        // equilibrium (3.8, 1.9) from the 2x2 linear solve.
        let b = BoxSet::unbounded(2);
        let settled = settle(
            |_, x: &[f64]| vec![-x[0] + x[1] + 1.9, 0.5 * x[0] - x[1]],
            &b,
            &[0.0, 0.0],
            1e-9,
            200.0,
        )
        .unwrap();
        assert_relative_eq!(settled.state[0], 3.8, epsilon = 1e-7);
        assert_relative_eq!(settled.state[1], 1.9, epsilon = 1e-7);
    }

    #[test]
    fn settle_reports_non_convergence() {
        // constant rotation never settles
        let b = BoxSet::unbounded(2);
        let err = settle(
            |_, x: &[f64]| vec![-x[1], x[0]],
            &b,
            &[1.0, 0.0],
            1e-9,
            5.0,
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::NotSettled { .. }));
    }

    #[test]
    fn non_finite_field_is_an_error() {
        let b = BoxSet::unbounded(1);
        let err = integrate_projected(
            |t: f64, _: &[f64]| vec![if t > 0.1 { f64::NAN } else { 1.0 }],
            &b,
            &[0.0],
            &StepConfig::until(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, IntegrateError::NonFiniteField { .. }));
    }

    #[test]
    fn final_time_is_exact_and_times_increase() {
        let b = BoxSet::unbounded(1);
        let cfg = StepConfig::until(2.5).with_record_interval(0.1);
        let traj = integrate_projected(|_, x| vec![-0.3 * x[0]], &b, &[2.0], &cfg).unwrap();
        assert_eq!(traj.times()[0], 0.0);
        assert_eq!(traj.final_time(), 2.5);
        for w in traj.times().windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
