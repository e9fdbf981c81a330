//! Computational certification of gain-independent convergence.
//!
//! The closed loop converges for every controller gain when three conditions
//! on the *steady-state* data hold: (i) the controller subsystem is monotone
//! against the plant state, (ii) it has a well-defined steady-state map, and
//! (iii) the composed fixed-point iteration on the inputs contracts. This
//! module checks each condition through the sufficient criteria that are
//! decidable from samples — SISO/convexity structure, affine maps with sign
//! conditions, and the strong-convexity/Lipschitz constant gap — estimates
//! the constants involved, runs the fixed-point iteration, and proposes a
//! regularization weight when the gap fails.
//!
//! Sampled verdicts are marked as such: they support a condition on a grid,
//! they never prove it.

use crate::cost::CostModel;
use crate::geometry::{project_tangent, projected_residual_inf, BoxSet, GeometryError};
use crate::linalg::Matrix;
use crate::plant::{PlantError, PlantModel, Provenance, SteadyStateOptions};
use crate::scalar::{inf_dist, inf_norm, two_dist, two_norm, Scalar};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("inner minimizer hit its iteration cap (residual {residual:e})")]
    IterationCap { residual: f64 },
    #[error("multi-start minimizers disagree by {spread:e}; surrogate minimizer may not be unique")]
    MultiStartDisagreement { spread: f64 },
    #[error("strong convexity constant must be positive, got {0}")]
    NonPositiveCurvature(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Steady-state output oracle used by the certification routines: the map
/// `u -> k_y(u)` and its Jacobian. Implemented by [`PlantModel`] and by
/// closure-backed test maps.
pub trait SteadyStateMap<S>: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn output(&self, u: &[S]) -> Result<Vec<S>, PlantError>;
    fn sensitivity(&self, u: &[S]) -> Result<Matrix<S>, PlantError>;
    /// Affine structure `k_y(u) = gain u + offset`, when the map has one.
    fn affine(&self) -> Option<(Matrix<S>, Vec<S>)> {
        None
    }
}

impl<S: Scalar> SteadyStateMap<S> for PlantModel<S> {
    fn input_dim(&self) -> usize {
        PlantModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        PlantModel::output_dim(self)
    }

    fn output(&self, u: &[S]) -> Result<Vec<S>, PlantError> {
        Ok(self
            .steady_output(u, &SteadyStateOptions::default())?
            .output)
    }

    fn sensitivity(&self, u: &[S]) -> Result<Matrix<S>, PlantError> {
        Ok(PlantModel::sensitivity(self, u, &SteadyStateOptions::default())?.matrix)
    }

    fn affine(&self) -> Option<(Matrix<S>, Vec<S>)> {
        PlantModel::affine(self).map(|a| (a.gain.clone(), a.offset.clone()))
    }
}

/// Closure-backed steady-state map, for certification without a plant.
pub struct FnSteadyStateMap<S> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub output: Box<dyn Fn(&[S]) -> Vec<S> + Send + Sync>,
    pub sensitivity: Box<dyn Fn(&[S]) -> Matrix<S> + Send + Sync>,
    pub affine: Option<(Matrix<S>, Vec<S>)>,
}

impl<S: Scalar> SteadyStateMap<S> for FnSteadyStateMap<S> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn output(&self, u: &[S]) -> Result<Vec<S>, PlantError> {
        Ok((self.output)(u))
    }

    fn sensitivity(&self, u: &[S]) -> Result<Matrix<S>, PlantError> {
        Ok((self.sensitivity)(u))
    }

    fn affine(&self) -> Option<(Matrix<S>, Vec<S>)> {
        self.affine.clone()
    }
}

/// Verdict for the monotone-controller condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asm4iStatus {
    VerifiedByLemma2i,
    VerifiedByLemma2ii,
    VerifiedByLemma5Sampled,
    NotEstablished,
}

/// Verdict for the controller steady-state-map condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asm4iiStatus {
    VerifiedByLemma3i,
    VerifiedByLemma3ii,
    NotEstablished,
}

/// Verdict for the small-gain contraction condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asm4iiiStatus {
    VerifiedByLemma4,
    VerifiedByCorollary1,
    VerifiedByIteration,
    NotEstablished,
}

impl core::fmt::Display for Asm4iStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Self::VerifiedByLemma2i => "verified-by-lemma2i",
            Self::VerifiedByLemma2ii => "verified-by-lemma2ii",
            Self::VerifiedByLemma5Sampled => "verified-by-lemma5-sampled",
            Self::NotEstablished => "not-established",
        };
        write!(f, "{s}")
    }
}

impl core::fmt::Display for Asm4iiStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Self::VerifiedByLemma3i => "verified-by-lemma3i",
            Self::VerifiedByLemma3ii => "verified-by-lemma3ii",
            Self::NotEstablished => "not-established",
        };
        write!(f, "{s}")
    }
}

impl core::fmt::Display for Asm4iiiStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Self::VerifiedByLemma4 => "verified-by-lemma4",
            Self::VerifiedByCorollary1 => "verified-by-corollary1",
            Self::VerifiedByIteration => "verified-by-iteration",
            Self::NotEstablished => "not-established",
        };
        write!(f, "{s}")
    }
}

/// A constant with the route that produced it.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<S> {
    pub value: S,
    pub provenance: Provenance,
}

impl<S: Scalar> Estimate<S> {
    fn analytic(value: S) -> Self {
        Self {
            value,
            provenance: Provenance::Analytic,
        }
    }

    fn sampled(value: S) -> Self {
        Self {
            value,
            provenance: Provenance::FiniteDifference,
        }
    }
}

/// Strong-convexity / Lipschitz constants of the surrogate, plus the
/// sensitivity bounds of the steady-state map.
#[derive(Debug, Clone)]
pub struct ConstantEstimates<S> {
    /// Strong-convexity modulus of the surrogate in its first argument.
    pub mu: Estimate<S>,
    /// Lipschitz constant of the surrogate gradient in the anchor.
    pub ell: Estimate<S>,
    /// Bound on the sensitivity norm over the input box.
    pub sigma: Estimate<S>,
    /// Lipschitz constant of the sensitivity over the input box.
    pub eta: Estimate<S>,
}

impl<S: Scalar> ConstantEstimates<S> {
    /// `ell / mu`, the predicted contraction factor of the fixed-point
    /// iteration; `None` when `mu` is nonpositive.
    pub fn contraction(&self) -> Option<S> {
        (self.mu.value > S::zero()).then(|| self.ell.value / self.mu.value)
    }
}

/// Outcome of the certification pipeline.
#[derive(Debug, Clone)]
pub struct CertificationReport<S> {
    pub asm4_i: Asm4iStatus,
    pub asm4_ii: Asm4iiStatus,
    pub asm4_iii: Asm4iiiStatus,
    pub constants: ConstantEstimates<S>,
    pub fixed_point: Option<Vec<S>>,
    /// Suggested extra input regularization when the contraction gap fails;
    /// zero when nothing is needed.
    pub suggested_regularization: S,
    pub notes: Vec<String>,
}

impl<S: Scalar> CertificationReport<S> {
    pub fn is_certified(&self) -> bool {
        self.asm4_i != Asm4iStatus::NotEstablished
            && self.asm4_ii != Asm4iiStatus::NotEstablished
            && self.asm4_iii != Asm4iiiStatus::NotEstablished
    }

    /// Key-value tree rendering (valid TOML).
    pub fn to_kv_tree(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("certified = {}\n", self.is_certified()));
        s.push_str(&format!(
            "suggested_regularization = {:.17e}\n",
            self.suggested_regularization.as_f64()
        ));
        s.push_str("\n[verdicts]\n");
        s.push_str(&format!("asm4_i = \"{}\"\n", self.asm4_i));
        s.push_str(&format!("asm4_ii = \"{}\"\n", self.asm4_ii));
        s.push_str(&format!("asm4_iii = \"{}\"\n", self.asm4_iii));
        s.push_str("\n[constants]\n");
        let kv = |name: &str, e: &Estimate<S>| {
            format!(
                "{name} = {:.17e}\n{name}_provenance = \"{}\"\n",
                e.value.as_f64(),
                match e.provenance {
                    Provenance::Analytic => "analytic",
                    _ => "sampled",
                }
            )
        };
        s.push_str(&kv("mu", &self.constants.mu));
        s.push_str(&kv("ell", &self.constants.ell));
        s.push_str(&kv("sigma", &self.constants.sigma));
        s.push_str(&kv("eta", &self.constants.eta));
        if let Some(rate) = self.constants.contraction() {
            s.push_str(&format!("contraction = {:.17e}\n", rate.as_f64()));
        }
        if let Some(fp) = &self.fixed_point {
            let entries: Vec<String> =
                fp.iter().map(|v| format!("{:.17e}", v.as_f64())).collect();
            s.push_str(&format!(
                "\n[fixed_point]\nu_star = [{}]\n",
                entries.join(", ")
            ));
        }
        if !self.notes.is_empty() {
            s.push_str("\n[notes]\n");
            for (i, note) in self.notes.iter().enumerate() {
                s.push_str(&format!("note_{i} = \"{}\"\n", note.replace('"', "'")));
            }
        }
        s
    }
}

impl<S: Scalar> core::fmt::Display for CertificationReport<S> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(
            f,
            "certification: {}",
            if self.is_certified() {
                "CERTIFIED (gain-independent convergence)"
            } else {
                "NOT ESTABLISHED"
            }
        )?;
        writeln!(f, "  monotone controller subsystem : {}", self.asm4_i)?;
        writeln!(f, "  controller steady-state map   : {}", self.asm4_ii)?;
        writeln!(f, "  small-gain contraction        : {}", self.asm4_iii)?;
        let line = |name: &str, e: &Estimate<S>| {
            format!("  {name:<6}: {:.6} ({})", e.value.as_f64(), e.provenance)
        };
        writeln!(f, "{}", line("mu", &self.constants.mu))?;
        writeln!(f, "{}", line("ell", &self.constants.ell))?;
        writeln!(f, "{}", line("sigma", &self.constants.sigma))?;
        writeln!(f, "{}", line("eta", &self.constants.eta))?;
        if let Some(rate) = self.constants.contraction() {
            writeln!(f, "  contraction rate ell/mu: {:.6}", rate.as_f64())?;
        }
        if let Some(fp) = &self.fixed_point {
            let entries: Vec<String> =
                fp.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
            writeln!(f, "  fixed point u*: [{}]", entries.join(", "))?;
        }
        if self.suggested_regularization > S::zero() {
            writeln!(
                f,
                "  suggested input regularization: {:.6}",
                self.suggested_regularization.as_f64()
            )?;
        }
        for note in &self.notes {
            writeln!(f, "  note: {note}")?;
        }
        Ok(())
    }
}

/// Where the surrogate linearization is anchored: a previous input iterate,
/// or a measured output.
pub enum Anchor<'a, S> {
    Input(&'a [S]),
    Output(&'a [S]),
}

/// Inner-solver residual tolerance.
const ARGMIN_RESIDUAL_TOL: f64 = 1e-10;
/// Inner-solver iteration cap.
const ARGMIN_ITERATION_CAP: usize = 100_000;
/// Multi-start agreement threshold.
const MULTISTART_AGREEMENT: f64 = 1e-6;
/// Corner starts are capped at this count.
const MAX_CORNER_STARTS: usize = 64;

/// Minimizes the anchored surrogate `Phi_u(u) + k_y(u)' c` over the box,
/// where `c` is the output-cost gradient at the anchor.
///
/// For a diagonal quadratic input cost with an affine steady-state map the
/// minimizer is computed in closed form (exact up to rounding); otherwise
/// projected gradient descent with backtracking runs from every box corner
/// (capped at 64) plus the midpoint, and disagreement between starts is
/// reported as an error.
pub fn surrogate_argmin<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    anchor: Anchor<'_, S>,
    input_box: &BoxSet<S>,
) -> Result<Vec<S>, CertifyError> {
    let c = match anchor {
        Anchor::Input(u_anchor) => cost.grad_phi_y(&map.output(u_anchor)?),
        Anchor::Output(y_anchor) => cost.grad_phi_y(y_anchor),
    };
    surrogate_argmin_weighted(cost, map, &c, input_box)
}

fn surrogate_argmin_weighted<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    c: &[S],
    input_box: &BoxSet<S>,
) -> Result<Vec<S>, CertifyError> {
    // Exact route: Phi_u = beta_u u'u and affine k_y give the componentwise
    // minimizer clip(-(gain' c) / (2 beta_u)).
    if let (Some(q), Some((gain, _))) = (cost.quadratic_data(), map.affine()) {
        if q.beta_u > S::zero() {
            let pull = gain.tr_matvec(c);
            let two = S::of(2.0);
            let raw: Vec<S> = pull.iter().map(|p| -*p / (two * q.beta_u)).collect();
            return Ok(input_box.project(&raw));
        }
    }

    let objective = |u: &[S]| -> Result<S, CertifyError> {
        let ky = map.output(u)?;
        Ok(cost.phi_u(u) + ky.iter().zip(c).map(|(k, ci)| *k * *ci).sum::<S>())
    };
    let gradient = |u: &[S]| -> Result<Vec<S>, CertifyError> {
        let pull = map.sensitivity(u)?.tr_matvec(c);
        Ok(cost
            .grad_phi_u(u)
            .into_iter()
            .zip(pull)
            .map(|(g, p)| g + p)
            .collect())
    };

    let mut starts = input_box.corners(MAX_CORNER_STARTS)?;
    starts.push(input_box.midpoint()?);
    let mut solutions: Vec<(Vec<S>, S)> = Vec::with_capacity(starts.len());
    for start in starts {
        let u = projected_gradient_descent(&objective, &gradient, input_box, start)?;
        let value = objective(&u)?;
        solutions.push((u, value));
    }
    let spread = solutions
        .iter()
        .flat_map(|(a, _)| solutions.iter().map(move |(b, _)| inf_dist(a, b)))
        .fold(S::zero(), S::max);
    if spread > S::of(MULTISTART_AGREEMENT) {
        return Err(CertifyError::MultiStartDisagreement {
            spread: spread.as_f64(),
        });
    }
    let best = solutions
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal))
        .expect("at least one start");
    Ok(best.0)
}

fn projected_gradient_descent<S: Scalar>(
    objective: &dyn Fn(&[S]) -> Result<S, CertifyError>,
    gradient: &dyn Fn(&[S]) -> Result<Vec<S>, CertifyError>,
    input_box: &BoxSet<S>,
    start: Vec<S>,
) -> Result<Vec<S>, CertifyError> {
    let residual_tol = S::of(ARGMIN_RESIDUAL_TOL);
    let armijo = S::of(1e-4);
    let mut u = input_box.project(&start);
    let mut step = S::one();
    for _ in 0..ARGMIN_ITERATION_CAP {
        let g = gradient(&u)?;
        let neg_g: Vec<S> = g.iter().map(|v| -*v).collect();
        let residual = inf_norm(&project_tangent(&u, &neg_g, input_box)?);
        if residual < residual_tol {
            return Ok(u);
        }
        let f0 = objective(&u)?;
        // absolute slack at the rounding level of the objective, so the
        // descent test stays decidable near the minimum
        let noise = S::epsilon() * (S::one() + f0.abs()) * S::of(4.0);
        // try a larger step first, then backtrack
        step = (step * S::of(2.0)).min(S::of(1e6));
        let mut accepted = false;
        for _ in 0..200 {
            let candidate: Vec<S> = u
                .iter()
                .zip(&g)
                .map(|(ui, gi)| *ui - step * *gi)
                .collect();
            let candidate = input_box.project(&candidate);
            let delta: Vec<S> = candidate
                .iter()
                .zip(&u)
                .map(|(ci, ui)| *ci - *ui)
                .collect();
            let decrease: S = g.iter().zip(&delta).map(|(gi, d)| *gi * *d).sum();
            let f1 = objective(&candidate)?;
            if f1 <= f0 + armijo * decrease + noise {
                u = candidate;
                accepted = true;
                break;
            }
            step = step * S::of(0.5);
        }
        if !accepted {
            // line-search underflow: accept only if essentially stationary
            if residual < residual_tol * S::of(100.0) {
                return Ok(u);
            }
            return Err(CertifyError::IterationCap {
                residual: residual.as_f64(),
            });
        }
    }
    let g = gradient(&u)?;
    let neg_g: Vec<S> = g.iter().map(|v| -*v).collect();
    let residual = inf_norm(&project_tangent(&u, &neg_g, input_box)?);
    Err(CertifyError::IterationCap {
        residual: residual.as_f64(),
    })
}

/// One run of the composed fixed-point iteration.
#[derive(Debug, Clone)]
pub struct SmallGainRun<S> {
    /// `u_0, u_1, ...` including the start.
    pub iterates: Vec<Vec<S>>,
    pub fixed_point: Option<Vec<S>>,
    pub converged: bool,
    /// Geometric rate fitted on the tail half of the error sequence.
    pub empirical_rate: Option<S>,
}

/// Iterates the anchored surrogate minimizer until successive iterates agree
/// within `tol` (infinity norm). Non-convergence within `max_iters` is a
/// verdict, not an error.
pub fn small_gain_iterate<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    input_box: &BoxSet<S>,
    u0: &[S],
    max_iters: usize,
    tol: S,
) -> Result<SmallGainRun<S>, CertifyError> {
    let mut iterates = vec![input_box.project(u0)];
    let mut converged = false;
    for _ in 0..max_iters {
        let prev = iterates.last().unwrap().clone();
        let next = surrogate_argmin(cost, map, Anchor::Input(&prev), input_box)?;
        let gap = inf_dist(&next, &prev);
        iterates.push(next);
        if gap < tol {
            converged = true;
            break;
        }
    }
    let fixed_point = converged.then(|| iterates.last().unwrap().clone());
    let empirical_rate = fixed_point
        .as_ref()
        .and_then(|fp| fit_geometric_rate(&iterates, fp));
    Ok(SmallGainRun {
        iterates,
        fixed_point,
        converged,
        empirical_rate,
    })
}

/// Least-squares slope of `log ||u_n - u_star||` over the tail half of the
/// iterates (early iterates may clip at faces and distort the fit).
fn fit_geometric_rate<S: Scalar>(iterates: &[Vec<S>], fixed_point: &[S]) -> Option<S> {
    let logs: Vec<(S, S)> = iterates
        .iter()
        .enumerate()
        .map(|(n, u)| (n, two_dist(u, fixed_point)))
        .filter(|(_, e)| *e > S::of(1e-300))
        .map(|(n, e)| (S::of(n as f64), e.ln()))
        .collect();
    if logs.len() < 4 {
        return None;
    }
    let tail = &logs[logs.len() / 2..];
    let n = S::of(tail.len() as f64);
    let sum_x: S = tail.iter().map(|(x, _)| *x).sum();
    let sum_y: S = tail.iter().map(|(_, y)| *y).sum();
    let sum_xx: S = tail.iter().map(|(x, _)| *x * *x).sum();
    let sum_xy: S = tail.iter().map(|(x, y)| *x * *y).sum();
    let denom = n * sum_xx - sum_x * sum_x;
    if denom == S::zero() {
        return None;
    }
    let slope = (n * sum_xy - sum_x * sum_y) / denom;
    Some(slope.exp())
}

/// Sample sets handed to the certification checks.
#[derive(Debug, Clone)]
pub struct CertificationSamples<S> {
    /// Inputs in the constraint box.
    pub u_grid: Vec<Vec<S>>,
    /// Outputs along reachable trajectories (the sandwich bounds).
    pub reachable_outputs: Vec<Vec<S>>,
}

/// Monotone-controller condition via the two decidable branches: SISO with
/// convex output cost, or affine map with sign-structured Hessians.
pub fn check_lemma2<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    monotone_established: bool,
    samples: &CertificationSamples<S>,
) -> Asm4iStatus {
    if !monotone_established {
        return Asm4iStatus::NotEstablished;
    }
    // branch (i): SISO plant and convex output cost
    if map.input_dim() == 1 && map.output_dim() == 1 {
        let convex = !samples.reachable_outputs.is_empty()
            && samples.reachable_outputs.iter().all(|y| {
                output_hessian(cost, y)
                    .map_or(false, |h| h.min_eigenvalue_symmetric() >= S::zero())
            });
        if convex {
            return Asm4iStatus::VerifiedByLemma2i;
        }
    }
    // branch (ii): affine map (nonnegative gain) with sign-structured
    // Hessians
    if let Some((gain, _)) = map.affine() {
        let tol = S::of(crate::plant::MONOTONE_SIGN_TOL);
        let gain_ok = gain.is_nonnegative(tol);
        let hess_u_ok = samples.u_grid.iter().all(|u| {
            input_hessian(cost, u).map_or(false, |h| {
                (0..h.nrows()).all(|i| (0..h.ncols()).all(|j| i == j || h[(i, j)] <= tol))
            })
        });
        let hess_y_ok = samples
            .reachable_outputs
            .iter()
            .all(|y| output_hessian(cost, y).map_or(false, |h| h.is_nonnegative(tol)));
        if gain_ok && hess_u_ok && hess_y_ok {
            return Asm4iStatus::VerifiedByLemma2ii;
        }
    }
    Asm4iStatus::NotEstablished
}

fn input_hessian<S: Scalar>(cost: &CostModel<S>, u: &[S]) -> Option<Matrix<S>> {
    cost.hess_phi_u(u)
        .or_else(|| Some(fd_hessian(u, |p| cost.phi_u(p))))
}

fn output_hessian<S: Scalar>(cost: &CostModel<S>, y: &[S]) -> Option<Matrix<S>> {
    cost.hess_phi_y(y)
        .or_else(|| Some(fd_hessian(y, |p| cost.phi_y(p))))
}

/// Central-difference Hessian (symmetrized).
fn fd_hessian<S: Scalar>(point: &[S], func: impl Fn(&[S]) -> S) -> Matrix<S> {
    let n = point.len();
    let mut h = Matrix::zeros(n, n);
    let base_step = S::of(1e-4);
    for i in 0..n {
        let hi = base_step * (S::one() + point[i].abs());
        for j in i..n {
            let hj = base_step * (S::one() + point[j].abs());
            let mut pp = point.to_vec();
            let mut pm = point.to_vec();
            let mut mp = point.to_vec();
            let mut mm = point.to_vec();
            pp[i] = pp[i] + hi;
            pp[j] = pp[j] + hj;
            pm[i] = pm[i] + hi;
            pm[j] = pm[j] - hj;
            mp[i] = mp[i] - hi;
            mp[j] = mp[j] + hj;
            mm[i] = mm[i] - hi;
            mm[j] = mm[j] - hj;
            let value =
                (func(&pp) - func(&pm) - func(&mp) + func(&mm)) / (S::of(4.0) * hi * hj);
            h[(i, j)] = value;
            h[(j, i)] = value;
        }
    }
    h
}

/// Sampled check of the orthant condition on the controller drift: for
/// ordered pairs `v <= v'`, `y >= y'`, the drift difference must lie in the
/// tangent cone of the nonpositive orthant at `v - v'` — only coordinates
/// with `v_i = v'_i` bind.
pub fn check_lemma5_sampled<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    pairs: &[((Vec<S>, Vec<S>), (Vec<S>, Vec<S>))],
) -> Result<Asm4iStatus, CertifyError> {
    let tol = S::of(1e-9);
    let drift = |v: &[S], y: &[S]| -> Result<Vec<S>, CertifyError> {
        let pull = map.sensitivity(v)?.tr_matvec(&cost.grad_phi_y(y));
        Ok(cost
            .grad_phi_u(v)
            .into_iter()
            .zip(pull)
            .map(|(g, p)| -(g + p))
            .collect())
    };
    for ((v, y), (v_prime, y_prime)) in pairs {
        let q1 = drift(v, y)?;
        let q2 = drift(v_prime, y_prime)?;
        for i in 0..q1.len() {
            // binding only where the inputs tie
            if (v[i] - v_prime[i]).abs() <= S::of(1e-14) && q1[i] - q2[i] > tol {
                return Ok(Asm4iStatus::NotEstablished);
            }
        }
    }
    Ok(Asm4iStatus::VerifiedByLemma5Sampled)
}

/// Controller steady-state-map condition: exact branch for strictly convex
/// input cost with affine map, sampled convexity-modulus branch otherwise.
pub fn check_lemma3<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    samples: &CertificationSamples<S>,
) -> Result<(Asm4iiStatus, Option<S>), CertifyError> {
    // branch (ii): affine map and strictly convex Phi_u
    if map.affine().is_some() {
        let strictly_convex = !samples.u_grid.is_empty()
            && samples.u_grid.iter().all(|u| {
                input_hessian(cost, u)
                    .map_or(false, |h| h.min_eigenvalue_symmetric() > S::zero())
            });
        if strictly_convex {
            return Ok((Asm4iiStatus::VerifiedByLemma3ii, None));
        }
    }
    // branch (i): sampled strict-convexity modulus of the surrogate in v,
    // anchored at reachable outputs
    if samples.reachable_outputs.is_empty() {
        return Ok((Asm4iiStatus::NotEstablished, None));
    }
    let mut modulus = S::infinity();
    for y in &samples.reachable_outputs {
        let c = cost.grad_phi_y(y);
        for u in &samples.u_grid {
            modulus = modulus.min(surrogate_curvature(cost, map, u, &c)?);
        }
    }
    if modulus > S::zero() {
        Ok((Asm4iiStatus::VerifiedByLemma3i, Some(modulus)))
    } else {
        Ok((Asm4iiStatus::NotEstablished, Some(modulus)))
    }
}

/// Smallest eigenvalue of the surrogate Hessian in `u` for a fixed gradient
/// weight `c`, by finite differences of the gradient.
fn surrogate_curvature<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    u: &[S],
    c: &[S],
) -> Result<S, CertifyError> {
    let m = u.len();
    let grad = |v: &[S]| -> Result<Vec<S>, CertifyError> {
        let pull = map.sensitivity(v)?.tr_matvec(c);
        Ok(cost
            .grad_phi_u(v)
            .into_iter()
            .zip(pull)
            .map(|(g, p)| g + p)
            .collect())
    };
    let mut hess = Matrix::zeros(m, m);
    for j in 0..m {
        let h = S::of(1e-5) * (S::one() + u[j].abs());
        let mut plus = u.to_vec();
        let mut minus = u.to_vec();
        plus[j] = plus[j] + h;
        minus[j] = minus[j] - h;
        let gp = grad(&plus)?;
        let gm = grad(&minus)?;
        for i in 0..m {
            hess[(i, j)] = (gp[i] - gm[i]) / (plus[j] - minus[j]);
        }
    }
    let mut sym = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            sym[(i, j)] = (hess[(i, j)] + hess[(j, i)]) * S::of(0.5);
        }
    }
    Ok(sym.min_eigenvalue_symmetric())
}

/// Estimates the four certification constants over a grid of the given
/// density (points per input dimension). Quadratic metadata plus an affine
/// map yield analytic values for `mu` and `ell`.
pub fn estimate_constants<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    input_box: &BoxSet<S>,
    grid_density: usize,
) -> Result<ConstantEstimates<S>, CertifyError> {
    let grid = input_box.grid(grid_density)?;
    let two = S::of(2.0);

    // sigma and eta from the sensitivity over the grid
    let sensitivities: Vec<Matrix<S>> = grid
        .iter()
        .map(|u| map.sensitivity(u))
        .collect::<Result<_, _>>()?;
    let mut sigma = S::zero();
    for s in &sensitivities {
        sigma = sigma.max(s.spectral_norm());
    }
    let mut eta = S::zero();
    for (i, (ui, si)) in grid.iter().zip(&sensitivities).enumerate() {
        for (uj, sj) in grid.iter().zip(&sensitivities).skip(i + 1) {
            let gap = two_dist(ui, uj);
            if gap > S::zero() {
                eta = eta.max(si.sub(sj).spectral_norm() / gap);
            }
        }
    }
    let (sigma, eta) = (Estimate::sampled(sigma), Estimate::sampled(eta));

    // analytic route for the quadratic-affine structure
    if let (Some(q), Some((gain, _))) = (cost.quadratic_data(), map.affine()) {
        let norm = gain.spectral_norm();
        return Ok(ConstantEstimates {
            mu: Estimate::analytic(two * q.beta_u),
            ell: Estimate::analytic(two * q.beta_y * norm * norm),
            sigma,
            eta,
        });
    }

    // sampled mu: min curvature of the surrogate anchored across the grid
    let mut mu = S::infinity();
    for anchor in &grid {
        let c = cost.grad_phi_y(&map.output(anchor)?);
        for u in &grid {
            mu = mu.min(surrogate_curvature(cost, map, u, &c)?);
        }
    }

    // sampled ell: Lipschitz constant of the anchored gradient term in the
    // anchor, supremum over u
    let anchored_pull = |u: &[S], anchor: &[S]| -> Result<Vec<S>, CertifyError> {
        let c = cost.grad_phi_y(&map.output(anchor)?);
        Ok(map.sensitivity(u)?.tr_matvec(&c))
    };
    let mut ell = S::zero();
    for u in &grid {
        for (i, a1) in grid.iter().enumerate() {
            let p1 = anchored_pull(u, a1)?;
            for a2 in grid.iter().skip(i + 1) {
                let gap = two_dist(a1, a2);
                if gap > S::zero() {
                    let p2 = anchored_pull(u, a2)?;
                    let diff: Vec<S> = p1.iter().zip(&p2).map(|(x, y)| *x - *y).collect();
                    ell = ell.max(two_norm(&diff) / gap);
                }
            }
        }
    }

    Ok(ConstantEstimates {
        mu: Estimate::sampled(mu),
        ell: Estimate::sampled(ell),
        sigma,
        eta,
    })
}

/// Contraction-gap test: verified iff `mu > ell` strictly.
pub fn check_lemma4<S: Scalar>(mu: S, ell: S) -> Result<(Asm4iiiStatus, Option<S>), CertifyError> {
    if !(mu > S::zero()) {
        return Err(CertifyError::NonPositiveCurvature(mu.as_f64()));
    }
    let rate = ell / mu;
    if mu > ell {
        Ok((Asm4iiiStatus::VerifiedByLemma4, Some(rate)))
    } else {
        Ok((Asm4iiiStatus::NotEstablished, Some(rate)))
    }
}

/// Quadratic-cost special case: `beta_u > beta_y * u_hat * ||gain||^2`, with
/// `u_hat` the box radius. Intended for a linear map (zero offset).
pub fn check_corollary1<S: Scalar>(
    beta_u: S,
    beta_y: S,
    gain: &Matrix<S>,
    input_box: &BoxSet<S>,
) -> Result<Asm4iiiStatus, CertifyError> {
    let u_hat = input_box.radius()?;
    let norm = gain.spectral_norm();
    if beta_u > beta_y * u_hat * norm * norm {
        Ok(Asm4iiiStatus::VerifiedByCorollary1)
    } else {
        Ok(Asm4iiiStatus::NotEstablished)
    }
}

/// Smallest extra quadratic input weight that closes the contraction gap
/// with the given safety margin: `mu + 2 b >= ell (1 + margin)`.
pub fn suggest_regularization<S: Scalar>(mu: S, ell: S, margin: S) -> S {
    let needed = (ell * (S::one() + margin) - mu) * S::of(0.5);
    needed.max(S::zero())
}

#[derive(Debug, Clone)]
pub struct ReferenceOptimum<S> {
    pub u_star: Vec<S>,
    /// Projected-gradient residual at the reported point.
    pub residual: S,
}

/// Best critical point of the full steady-state cost over the box, found by
/// multi-start projected gradient descent; the independent reference against
/// which closed-loop limits and small-gain fixed points are compared.
pub fn solve_reference_optimum<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    input_box: &BoxSet<S>,
) -> Result<ReferenceOptimum<S>, CertifyError> {
    let objective = |u: &[S]| -> Result<S, CertifyError> {
        let y = map.output(u)?;
        Ok(cost.phi_u(u) + cost.phi_y(&y))
    };
    let gradient = |u: &[S]| -> Result<Vec<S>, CertifyError> {
        let y = map.output(u)?;
        let pull = map.sensitivity(u)?.tr_matvec(&cost.grad_phi_y(&y));
        Ok(cost
            .grad_phi_u(u)
            .into_iter()
            .zip(pull)
            .map(|(g, p)| g + p)
            .collect())
    };
    let mut starts = input_box.corners(MAX_CORNER_STARTS)?;
    starts.push(input_box.midpoint()?);
    let mut best: Option<(Vec<S>, S)> = None;
    for start in starts {
        let u = projected_gradient_descent(&objective, &gradient, input_box, start)?;
        let value = objective(&u)?;
        if best.as_ref().map_or(true, |(_, v)| value < *v) {
            best = Some((u, value));
        }
    }
    let (u_star, _) = best.expect("at least one start");
    let g = gradient(&u_star)?;
    let neg_g: Vec<S> = g.iter().map(|v| -*v).collect();
    let residual = projected_residual_inf(&u_star, &neg_g, input_box)?;
    Ok(ReferenceOptimum { u_star, residual })
}

/// Options for the full certification pipeline.
#[derive(Debug, Clone)]
pub struct CertifyOptions<S> {
    pub grid_density: usize,
    pub small_gain_tol: S,
    pub small_gain_max_iters: usize,
    /// Safety margin used in the regularization suggestion.
    pub regularization_margin: S,
    /// Fallback iteration starts when the constant gap fails.
    pub iteration_starts: usize,
}

impl<S: Scalar> Default for CertifyOptions<S> {
    fn default() -> Self {
        Self {
            grid_density: 21,
            small_gain_tol: S::of(1e-6),
            small_gain_max_iters: 10_000,
            regularization_margin: S::of(0.05),
            iteration_starts: 5,
        }
    }
}

/// Runs the full certification pipeline: the three condition checks, the
/// constant estimates, the fixed point, and a regularization suggestion when
/// the contraction gap fails.
pub fn run_certification<S: Scalar>(
    cost: &CostModel<S>,
    map: &dyn SteadyStateMap<S>,
    input_box: &BoxSet<S>,
    monotone_established: bool,
    samples: &CertificationSamples<S>,
    opts: &CertifyOptions<S>,
) -> Result<CertificationReport<S>, CertifyError> {
    let mut notes = Vec::new();

    let asm4_i = check_lemma2(cost, map, monotone_established, samples);
    if !monotone_established {
        notes.push("plant monotonicity not established; condition checks degraded".into());
    }
    if asm4_i != Asm4iStatus::NotEstablished && cost.quadratic_data().is_none() {
        notes.push("asm4(i): Hessian sign conditions checked on samples only".into());
    }

    let (asm4_ii, modulus) = check_lemma3(cost, map, samples)?;
    if let Some(m) = modulus {
        notes.push(format!(
            "asm4(ii): sampled surrogate convexity modulus {:.6}",
            m.as_f64()
        ));
    }

    let constants = estimate_constants(cost, map, input_box, opts.grid_density)?;
    if constants.mu.provenance != Provenance::Analytic {
        notes.push("constants: sampled estimates, not proofs".into());
    }

    let (mut asm4_iii, _) = check_lemma4(constants.mu.value, constants.ell.value)?;
    if asm4_iii == Asm4iiiStatus::NotEstablished {
        // corollary route needs quadratic metadata and a linear map
        if let (Some(q), Some((gain, offset))) = (cost.quadratic_data(), map.affine()) {
            if offset.iter().all(|o| *o == S::zero()) {
                asm4_iii = check_corollary1(q.beta_u, q.beta_y, &gain, input_box)?;
            }
        }
    }
    if asm4_iii == Asm4iiiStatus::NotEstablished && opts.iteration_starts > 0 {
        // last resort: run the iteration from a few starts
        let mut all_converged = true;
        let mut limits: Vec<Vec<S>> = Vec::new();
        for start in iteration_start_points(input_box, opts.iteration_starts)? {
            match small_gain_iterate(
                cost,
                map,
                input_box,
                &start,
                opts.small_gain_max_iters,
                opts.small_gain_tol,
            ) {
                Ok(run) if run.converged => limits.push(run.fixed_point.unwrap()),
                _ => {
                    all_converged = false;
                    break;
                }
            }
        }
        let agree = limits
            .windows(2)
            .all(|w| inf_dist(&w[0], &w[1]) < S::of(10.0) * opts.small_gain_tol);
        if all_converged && agree && !limits.is_empty() {
            asm4_iii = Asm4iiiStatus::VerifiedByIteration;
            notes.push(
                "asm4(iii): iteration converged from sampled starts only; not a proof for every start"
                    .into(),
            );
        }
    }

    let suggested_regularization = if asm4_iii == Asm4iiiStatus::NotEstablished {
        suggest_regularization(
            constants.mu.value,
            constants.ell.value,
            opts.regularization_margin,
        )
    } else {
        S::zero()
    };

    let fixed_point = if asm4_iii != Asm4iiiStatus::NotEstablished {
        small_gain_iterate(
            cost,
            map,
            input_box,
            &input_box.midpoint()?,
            opts.small_gain_max_iters,
            opts.small_gain_tol,
        )?
        .fixed_point
    } else {
        None
    };

    Ok(CertificationReport {
        asm4_i,
        asm4_ii,
        asm4_iii,
        constants,
        fixed_point,
        suggested_regularization,
        notes,
    })
}

fn iteration_start_points<S: Scalar>(
    input_box: &BoxSet<S>,
    count: usize,
) -> Result<Vec<Vec<S>>, CertifyError> {
    let mut starts = input_box.corners(count.saturating_sub(1).max(1))?;
    starts.push(input_box.midpoint()?);
    starts.truncate(count.max(1));
    Ok(starts)
}
