//! Simulation and certification toolkit for online feedback optimization
//! (OFO) of monotone plants.
//!
//! An OFO controller runs an optimization algorithm in closed loop with a
//! physical plant, steering it to the minimizer of a steady-state cost while
//! only using the sensitivity of the steady-state output map. For monotone
//! plants this crate can certify, from steady-state data alone, that the
//! closed loop converges for *any* controller gain — no timescale separation
//! between plant and controller is needed.
//!
//! The crate provides:
//!
//! - [`geometry`]: box constraint sets, orthant orders, and the explicit
//!   tangent-cone projection on boxes;
//! - [`integrate`]: adaptive integration of projected dynamical systems and
//!   simulate-to-equilibrium;
//! - [`plant`]: plant models with steady-state maps, sensitivities, and
//!   monotonicity verification;
//! - [`cost`]: separable steady-state cost models;
//! - [`control`]: the OFO control law, closed-loop assembly and simulation,
//!   and the model-based gradient-flow baseline;
//! - [`certify`]: computational verification of the sufficient conditions
//!   for gain-independent convergence, constant estimation, the small-gain
//!   fixed-point iteration, and the regularization recipe;
//! - [`scenario`]: builtin case studies, configuration files, CSV export.
//!
//! All numeric modules are generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the aliases below fix `f64`, which is what the CLI and
//! the scenario layer use.

pub mod certify;
pub mod control;
pub mod cost;
pub mod geometry;
pub mod integrate;
pub mod linalg;
pub mod plant;
pub mod scalar;
pub mod scenario;
pub mod schedule;

pub use scalar::Scalar;

/// `f64` box set.
pub type BoxSet64 = geometry::BoxSet<f64>;
/// `f64` dense matrix.
pub type Matrix64 = linalg::Matrix<f64>;
/// `f64` trajectory.
pub type Trajectory64 = integrate::Trajectory<f64>;
/// `f64` step configuration.
pub type StepConfig64 = integrate::StepConfig<f64>;
/// `f64` plant model.
pub type PlantModel64 = plant::PlantModel<f64>;
/// `f64` cost model.
pub type CostModel64 = cost::CostModel<f64>;
/// `f64` OFO controller.
pub type OfoController64 = control::OfoController<f64>;
/// `f64` closed-loop system.
pub type ClosedLoopSystem64 = control::ClosedLoopSystem<f64>;
/// `f64` certification report.
// CertificationReport64 alias added with the certify module
/// `f64` schedule.
pub type Schedule64 = schedule::Schedule<f64>;
