//! The OFO control law, closed-loop assembly, and the model-based
//! gradient-flow baseline.
//!
//! The controller drives the input along the projected direction
//! `-alpha * (grad Phi_u(u) + grad k_y(u)' grad Phi_y(y))`, where `y` is the
//! live plant output. The only model information it consumes is the
//! steady-state sensitivity `grad k_y`; disturbances entering the plant are
//! never observed directly.

use crate::cost::CostModel;
use crate::geometry::{BoxSet, GeometryError};
use crate::integrate::{integrate_projected, IntegrateError, StepConfig, Trajectory};
use crate::linalg::Matrix;
use crate::plant::{PlantModel, PlantError, SteadyStateOptions};
use crate::scalar::Scalar;
use std::sync::Arc;
use thiserror::Error;

pub type SensitivityFn<S> = Arc<dyn Fn(&[S]) -> Matrix<S> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("controller gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("input constraint set must be compact")]
    NonCompactInputBox,
    #[error("dimension mismatch between {what}: expected {expected}, found {found}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite controller drift")]
    NonFiniteDrift,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Feedback-optimization controller: gain, input constraints, and a
/// sensitivity provider evaluated at the current input.
#[derive(Clone)]
pub struct OfoController<S> {
    gain: S,
    input_box: BoxSet<S>,
    sensitivity: SensitivityFn<S>,
}

impl<S: Scalar> OfoController<S> {
    pub fn new(
        gain: S,
        input_box: BoxSet<S>,
        sensitivity: impl Fn(&[S]) -> Matrix<S> + Send + Sync + 'static,
    ) -> Result<Self, ControlError> {
        if !(gain > S::zero()) {
            return Err(ControlError::NonPositiveGain(gain.as_f64()));
        }
        if !input_box.is_compact() {
            return Err(ControlError::NonCompactInputBox);
        }
        Ok(Self {
            gain,
            input_box,
            sensitivity: Arc::new(sensitivity),
        })
    }

    /// Controller using the plant's own sensitivity route (analytic when the
    /// plant has one, finite differences otherwise).
    pub fn for_plant(
        gain: S,
        input_box: BoxSet<S>,
        plant: &PlantModel<S>,
    ) -> Result<Self, ControlError> {
        let plant = plant.clone();
        let opts = SteadyStateOptions::default();
        let (p, m) = (plant.output_dim(), plant.input_dim());
        Self::new(gain, input_box, move |u: &[S]| {
            // a failed provider turns into a non-finite drift downstream
            plant.sensitivity(u, &opts).map_or_else(
                |_| {
                    let mut nan = Matrix::zeros(p, m);
                    for i in 0..p {
                        for j in 0..m {
                            nan[(i, j)] = S::nan();
                        }
                    }
                    nan
                },
                |s| s.matrix,
            )
        })
    }

    pub fn gain(&self) -> S {
        self.gain
    }

    pub fn input_box(&self) -> &BoxSet<S> {
        &self.input_box
    }

    pub fn sensitivity_at(&self, u: &[S]) -> Matrix<S> {
        (self.sensitivity)(u)
    }

    /// Pre-projection drift `-alpha (grad Phi_u(u) + grad k_y(u)' grad
    /// Phi_y(y))`; the tangent-cone projection is applied by the integrator.
    pub fn drift(&self, u: &[S], y: &[S], cost: &CostModel<S>) -> Result<Vec<S>, ControlError> {
        if u.len() != self.input_box.dim() {
            return Err(ControlError::Mismatch {
                what: "input and constraint box",
                expected: self.input_box.dim(),
                found: u.len(),
            });
        }
        let grad_u = cost.grad_phi_u(u);
        let grad_y = cost.grad_phi_y(y);
        let sens = self.sensitivity_at(u);
        if sens.nrows() != y.len() || sens.ncols() != u.len() {
            return Err(ControlError::Mismatch {
                what: "sensitivity and signals",
                expected: y.len() * u.len(),
                found: sens.nrows() * sens.ncols(),
            });
        }
        let pull = sens.tr_matvec(&grad_y);
        let drift: Vec<S> = grad_u
            .iter()
            .zip(&pull)
            .map(|(gu, p)| -self.gain * (*gu + *p))
            .collect();
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(ControlError::NonFiniteDrift);
        }
        Ok(drift)
    }
}

/// Plant and controller in feedback; the composed state is `(x, u)` with the
/// `u` block constrained by the controller's box.
#[derive(Clone)]
pub struct ClosedLoopSystem<S> {
    plant: PlantModel<S>,
    controller: OfoController<S>,
    cost: CostModel<S>,
}

/// Closed-loop trajectory split into plant state, input, and output samples.
#[derive(Debug, Clone)]
pub struct ClosedLoopTrajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
    pub inputs: Vec<Vec<S>>,
    pub outputs: Vec<Vec<S>>,
    /// Index of the first sample of each schedule segment.
    pub segment_starts: Vec<usize>,
}

impl<S: Scalar> ClosedLoopTrajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_input(&self) -> &[S] {
        self.inputs.last().expect("non-empty trajectory")
    }

    pub fn final_output(&self) -> &[S] {
        self.outputs.last().expect("non-empty trajectory")
    }

    pub fn final_state(&self) -> &[S] {
        self.states.last().expect("non-empty trajectory")
    }

    /// Sample range `[start, end)` of segment `k` (ends at the next segment's
    /// first sample).
    pub fn segment_range(&self, k: usize) -> core::ops::Range<usize> {
        let start = self.segment_starts[k];
        let end = self
            .segment_starts
            .get(k + 1)
            .copied()
            .unwrap_or(self.times.len());
        start..end
    }
}

impl<S: Scalar> ClosedLoopSystem<S> {
    pub fn plant(&self) -> &PlantModel<S> {
        &self.plant
    }

    pub fn controller(&self) -> &OfoController<S> {
        &self.controller
    }

    pub fn cost(&self) -> &CostModel<S> {
        &self.cost
    }

    /// Dimension of the composed state `(x, u)`.
    pub fn dimension(&self) -> usize {
        self.plant.state_dim() + self.plant.input_dim()
    }

    /// Constraint box of the composed state: states free, inputs boxed.
    pub fn composed_box(&self) -> BoxSet<S> {
        BoxSet::unbounded(self.plant.state_dim()).concat(self.controller.input_box())
    }

    /// Pre-projection vector field on the composed state.
    pub fn field(&self, omega: &[S]) -> Result<Vec<S>, ControlError> {
        let n = self.plant.state_dim();
        let (x, u) = omega.split_at(n);
        let mut dx = self.plant.dynamics(x, u);
        let y = self.plant.output(x);
        let du = self.controller.drift(u, &y, &self.cost)?;
        dx.extend(du);
        Ok(dx)
    }
}

/// Wires plant, controller, and cost together, checking dimensions.
pub fn assemble_closed_loop<S: Scalar>(
    plant: PlantModel<S>,
    controller: OfoController<S>,
    cost: CostModel<S>,
) -> Result<ClosedLoopSystem<S>, ControlError> {
    if controller.input_box().dim() != plant.input_dim() {
        return Err(ControlError::Mismatch {
            what: "controller box and plant input",
            expected: plant.input_dim(),
            found: controller.input_box().dim(),
        });
    }
    if cost.input_dim() != plant.input_dim() {
        return Err(ControlError::Mismatch {
            what: "cost and plant input",
            expected: plant.input_dim(),
            found: cost.input_dim(),
        });
    }
    if cost.output_dim() != plant.output_dim() {
        return Err(ControlError::Mismatch {
            what: "cost and plant output",
            expected: plant.output_dim(),
            found: cost.output_dim(),
        });
    }
    Ok(ClosedLoopSystem {
        plant,
        controller,
        cost,
    })
}

/// One exogenous segment: the system to run and for how long.
pub struct ClosedLoopSegment<S> {
    pub system: ClosedLoopSystem<S>,
    pub duration: S,
}

/// Simulates a single closed-loop system over `duration`.
pub fn simulate_closed_loop<S: Scalar>(
    system: &ClosedLoopSystem<S>,
    x0: &[S],
    u0: &[S],
    duration: S,
    config: &StepConfig<S>,
) -> Result<ClosedLoopTrajectory<S>, ControlError> {
    let segment = ClosedLoopSegment {
        system: system.clone(),
        duration,
    };
    simulate_closed_loop_schedule(core::slice::from_ref(&segment), x0, u0, config)
}

/// Simulates a sequence of closed-loop segments, carrying the composed state
/// across segment switches (exogenous parameters restart, the state does
/// not).
pub fn simulate_closed_loop_schedule<S: Scalar>(
    segments: &[ClosedLoopSegment<S>],
    x0: &[S],
    u0: &[S],
    config: &StepConfig<S>,
) -> Result<ClosedLoopTrajectory<S>, ControlError> {
    let first = segments.first().expect("at least one segment");
    let n = first.system.plant.state_dim();
    if x0.len() != n {
        return Err(ControlError::Mismatch {
            what: "initial state and plant",
            expected: n,
            found: x0.len(),
        });
    }
    let u0 = first
        .system
        .controller
        .input_box()
        .clamp_within(u0, S::of(crate::geometry::BOX_MEMBERSHIP_TOL))?;

    let mut omega: Vec<S> = x0.to_vec();
    omega.extend_from_slice(&u0);
    let mut out = ClosedLoopTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        segment_starts: Vec::new(),
    };
    let mut t_offset = S::zero();
    for segment in segments {
        let system = segment.system.clone();
        let boxset = system.composed_box();
        let seg_cfg = StepConfig {
            max_time: segment.duration,
            start_time: t_offset,
            ..config.clone()
        };
        let sys_for_field = system.clone();
        let dim = system.dimension();
        // a failed field evaluation surfaces as the integrator's
        // non-finite-field error
        let traj = integrate_projected(
            move |_, omega: &[S]| {
                sys_for_field
                    .field(omega)
                    .unwrap_or_else(|_| vec![S::nan(); dim])
            },
            &boxset,
            &omega,
            &seg_cfg,
        )?;
        omega = traj.final_state().to_vec();
        out.segment_starts.push(out.times.len());
        for (t, z) in traj.times().iter().zip(traj.states()) {
            if !out.times.is_empty() && *t <= *out.times.last().unwrap() {
                continue;
            }
            let (x, u) = z.split_at(n);
            out.times.push(*t);
            out.states.push(x.to_vec());
            out.inputs.push(u.to_vec());
            out.outputs.push(system.plant.output(x));
        }
        t_offset = t_offset + segment.duration;
    }
    Ok(out)
}

/// The model-based (open-loop) projected gradient flow on the steady-state
/// cost, used as the timescale-separation baseline: the plant never appears,
/// only its steady-state maps.
pub fn gradient_flow_reference<S: Scalar>(
    cost: &CostModel<S>,
    plant: &PlantModel<S>,
    input_box: &BoxSet<S>,
    gain: S,
    u0: &[S],
    duration: S,
    config: &StepConfig<S>,
) -> Result<Trajectory<S>, ControlError> {
    if !(gain > S::zero()) {
        return Err(ControlError::NonPositiveGain(gain.as_f64()));
    }
    let plant = plant.clone();
    let cost = cost.clone();
    let opts = SteadyStateOptions::default();
    let seg_cfg = StepConfig {
        max_time: duration,
        ..config.clone()
    };
    let m = plant.input_dim();
    let traj = integrate_projected(
        move |_, u: &[S]| {
            let steady = plant
                .steady_output(u, &opts)
                .and_then(|y| plant.sensitivity(u, &opts).map(|s| (y.output, s.matrix)));
            match steady {
                Ok((y, sens)) => {
                    let grad_u = cost.grad_phi_u(u);
                    let pull = sens.tr_matvec(&cost.grad_phi_y(&y));
                    grad_u
                        .iter()
                        .zip(&pull)
                        .map(|(g, p)| -gain * (*g + *p))
                        .collect()
                }
                Err(_) => vec![S::nan(); m],
            }
        },
        input_box,
        u0,
        &seg_cfg,
    )?;
    Ok(traj)
}

/// Max-step heuristic for a gain `alpha`: a tenth of the controller's local
/// time constant `1 / (alpha * curvature_scale)`, never above `horizon / 20`.
pub fn recommended_max_step<S: Scalar>(alpha: S, curvature_scale: S, horizon: S) -> S {
    let scale = curvature_scale.max(S::of(1e-6));
    (S::one() / (S::of(10.0) * alpha * scale)).min(horizon / S::of(20.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lti_plant(w: f64) -> PlantModel<f64> {
        PlantModel::new(
            2,
            1,
            1,
            move |x: &[f64], u: &[f64]| {
                vec![-x[0] + x[1] + u[0] + 0.9 * w, 0.5 * x[0] - x[1]]
            },
            |x: &[f64]| vec![x[1]],
        )
        .with_steady_state_maps(
            move |u: &[f64]| vec![2.0 * u[0] + 1.8 * w, u[0] + 0.9 * w],
            move |u: &[f64]| vec![u[0] + 0.9 * w],
        )
        .with_affine_steady_state(Matrix::scalar(1.0), vec![0.9 * w])
        .with_time_constant(3.5)
    }

    fn lti_cost() -> CostModel<f64> {
        CostModel::quadratic(1, 1.1, 1.0, vec![2.0])
    }

    fn lti_box() -> BoxSet<f64> {
        BoxSet::interval(-0.7, 1.0).unwrap()
    }

    #[test]
    fn drift_examples() {
        let plant = lti_plant(1.0);
        let cost = lti_cost();
        let c1 = OfoController::for_plant(1.0, lti_box(), &plant).unwrap();
        // grad Phi_u(0) = 0, grad Phi_y(0) = -4, S = 1 => drift 4
        assert_relative_eq!(c1.drift(&[0.0], &[0.0], &cost).unwrap()[0], 4.0);
        let c2 = OfoController::for_plant(2.0, lti_box(), &plant).unwrap();
        assert_relative_eq!(c2.drift(&[0.0], &[0.0], &cost).unwrap()[0], 8.0);
        // stationary cancellation: grad Phi_u(u) = -S' grad Phi_y(y)
        // 2.2 u = -2 (y - 2) at u = 11/21, y = 11/21 + 0.9
        let u = 11.0 / 21.0;
        let y = u + 0.9;
        let d = c1.drift(&[u], &[y], &cost).unwrap()[0];
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn gain_must_be_positive() {
        assert!(matches!(
            OfoController::new(0.0, lti_box(), |_| Matrix::scalar(1.0)),
            Err(ControlError::NonPositiveGain(_))
        ));
        assert!(matches!(
            OfoController::new(-1.0, lti_box(), |_| Matrix::scalar(1.0)),
            Err(ControlError::NonPositiveGain(_))
        ));
    }

    #[test]
    fn assembly_checks_dimensions() {
        let plant = lti_plant(1.0);
        let controller = OfoController::for_plant(1.0, lti_box(), &plant).unwrap();
        let system = assemble_closed_loop(plant.clone(), controller.clone(), lti_cost()).unwrap();
        assert_eq!(system.dimension(), 3);

        // p = 2 cost against a p = 1 plant
        let bad_cost = CostModel::quadratic(1, 1.0, 1.0, vec![2.0, 0.0]);
        assert!(matches!(
            assemble_closed_loop(plant, controller, bad_cost),
            Err(ControlError::Mismatch { .. })
        ));
    }

    #[test]
    fn closed_loop_reaches_the_interior_optimum() {
        let plant = lti_plant(1.0);
        let controller = OfoController::for_plant(10.0, lti_box(), &plant).unwrap();
        let system = assemble_closed_loop(plant, controller, lti_cost()).unwrap();
        let cfg = StepConfig::until(60.0).with_max_step(0.05);
        let traj = simulate_closed_loop(&system, &[0.0, 0.0], &[0.0], 60.0, &cfg).unwrap();
        assert_relative_eq!(traj.final_input()[0], 11.0 / 21.0, epsilon = 1e-4);
        // feasibility throughout
        for u in &traj.inputs {
            assert!(u[0] >= -0.7 - 1e-9 && u[0] <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn closed_loop_face_active_optimum() {
        let plant = lti_plant(-1.0);
        let controller = OfoController::for_plant(10.0, lti_box(), &plant).unwrap();
        let system = assemble_closed_loop(plant, controller, lti_cost()).unwrap();
        let cfg = StepConfig::until(60.0).with_max_step(0.05);
        let traj = simulate_closed_loop(&system, &[0.0, 0.0], &[0.0], 60.0, &cfg).unwrap();
        assert_relative_eq!(traj.final_input()[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn face_start_with_inward_drift_reenters() {
        let plant = lti_plant(1.0);
        let controller = OfoController::for_plant(1.0, lti_box(), &plant).unwrap();
        let system = assemble_closed_loop(plant, controller, lti_cost()).unwrap();
        // at u = 1, y = 2.0 steady: drift = -(2.2*1 + 2*(y-2)) < 0: inward
        let cfg = StepConfig::until(1.0);
        let traj = simulate_closed_loop(&system, &[2.0, 2.0], &[1.0], 1.0, &cfg).unwrap();
        assert!(traj.final_input()[0] < 1.0);
    }

    #[test]
    fn gradient_flow_baseline_converges() {
        let plant = lti_plant(1.0);
        let cfg = StepConfig::until(200.0);
        let traj = gradient_flow_reference(
            &lti_cost(),
            &plant,
            &lti_box(),
            1.0,
            &[0.0],
            200.0,
            &cfg,
        )
        .unwrap();
        assert_relative_eq!(traj.final_state()[0], 11.0 / 21.0, epsilon = 1e-6);
    }

    #[test]
    fn schedule_switches_keep_state() {
        let cost = lti_cost();
        let seg = |w: f64| ClosedLoopSegment {
            system: assemble_closed_loop(
                lti_plant(w),
                OfoController::for_plant(10.0, lti_box(), &lti_plant(w)).unwrap(),
                cost.clone(),
            )
            .unwrap(),
            duration: 40.0,
        };
        let segments = vec![seg(1.0), seg(-1.0)];
        let cfg = StepConfig::until(40.0).with_max_step(0.05);
        let traj = simulate_closed_loop_schedule(&segments, &[0.0, 0.0], &[0.0], &cfg).unwrap();
        assert_eq!(traj.segment_starts.len(), 2);
        // continuous time axis and continuous input across the switch
        let switch = traj.segment_starts[1];
        assert!(traj.times[switch] > traj.times[switch - 1]);
        assert!((traj.inputs[switch][0] - traj.inputs[switch - 1][0]).abs() < 0.05);
        // second segment converges to the face optimum
        assert_relative_eq!(traj.final_input()[0], 1.0, epsilon = 1e-4);
    }
}
