//! Separable steady-state cost models `Phi(u, y) = Phi_u(u) + Phi_y(y)`.

use crate::linalg::Matrix;
use crate::scalar::Scalar;
use std::sync::Arc;
use thiserror::Error;

pub type ScalarFn<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;
pub type GradFn<S> = Arc<dyn Fn(&[S]) -> Vec<S> + Send + Sync>;
pub type HessFn<S> = Arc<dyn Fn(&[S]) -> Matrix<S> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gradient of {which} deviates from finite differences by {deviation:e} (relative)")]
    GradientInconsistent { which: String, deviation: f64 },
    #[error("non-finite cost gradient")]
    NonFiniteGradient,
}

/// Quadratic structure when the cost is `beta_u u'u + beta_y ||y - y_ref||^2`;
/// unlocks analytic certification paths.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<S> {
    pub beta_u: S,
    pub beta_y: S,
    pub y_ref: Vec<S>,
}

#[derive(Clone)]
pub struct CostModel<S> {
    input_dim: usize,
    output_dim: usize,
    phi_u: ScalarFn<S>,
    grad_phi_u: GradFn<S>,
    phi_y: ScalarFn<S>,
    grad_phi_y: GradFn<S>,
    hess_phi_u: Option<HessFn<S>>,
    hess_phi_y: Option<HessFn<S>>,
    quadratic: Option<QuadraticCost<S>>,
}

impl<S: Scalar> core::fmt::Debug for CostModel<S> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CostModel")
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

impl<S: Scalar> CostModel<S> {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        phi_u: impl Fn(&[S]) -> S + Send + Sync + 'static,
        grad_phi_u: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
        phi_y: impl Fn(&[S]) -> S + Send + Sync + 'static,
        grad_phi_y: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            input_dim,
            output_dim,
            phi_u: Arc::new(phi_u),
            grad_phi_u: Arc::new(grad_phi_u),
            phi_y: Arc::new(phi_y),
            grad_phi_y: Arc::new(grad_phi_y),
            hess_phi_u: None,
            hess_phi_y: None,
            quadratic: None,
        }
    }

    /// `beta_u u'u + beta_y ||y - y_ref||^2`, with gradients, Hessians, and
    /// quadratic metadata filled in.
    pub fn quadratic(input_dim: usize, beta_u: S, beta_y: S, y_ref: Vec<S>) -> Self {
        let output_dim = y_ref.len();
        let y_ref_phi = y_ref.clone();
        let y_ref_grad = y_ref.clone();
        let two = S::of(2.0);
        let mut cost = Self::new(
            input_dim,
            output_dim,
            move |u: &[S]| beta_u * u.iter().map(|v| *v * *v).sum::<S>(),
            move |u: &[S]| u.iter().map(|v| two * beta_u * *v).collect(),
            move |y: &[S]| {
                beta_y
                    * y.iter()
                        .zip(&y_ref_phi)
                        .map(|(yi, r)| (*yi - *r) * (*yi - *r))
                        .sum::<S>()
            },
            move |y: &[S]| {
                y.iter()
                    .zip(&y_ref_grad)
                    .map(|(yi, r)| two * beta_y * (*yi - *r))
                    .collect()
            },
        );
        cost.quadratic = Some(QuadraticCost {
            beta_u,
            beta_y,
            y_ref,
        });
        cost.hess_phi_u = Some(Arc::new(move |_: &[S]| {
            let mut h = Matrix::zeros(input_dim, input_dim);
            for i in 0..input_dim {
                h[(i, i)] = two * beta_u;
            }
            h
        }));
        cost.hess_phi_y = Some(Arc::new(move |_: &[S]| {
            let mut h = Matrix::zeros(output_dim, output_dim);
            for i in 0..output_dim {
                h[(i, i)] = two * beta_y;
            }
            h
        }));
        cost
    }

    pub fn with_hessians(
        mut self,
        hess_phi_u: impl Fn(&[S]) -> Matrix<S> + Send + Sync + 'static,
        hess_phi_y: impl Fn(&[S]) -> Matrix<S> + Send + Sync + 'static,
    ) -> Self {
        self.hess_phi_u = Some(Arc::new(hess_phi_u));
        self.hess_phi_y = Some(Arc::new(hess_phi_y));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn phi_u(&self, u: &[S]) -> S {
        (self.phi_u)(u)
    }

    pub fn grad_phi_u(&self, u: &[S]) -> Vec<S> {
        (self.grad_phi_u)(u)
    }

    pub fn phi_y(&self, y: &[S]) -> S {
        (self.phi_y)(y)
    }

    pub fn grad_phi_y(&self, y: &[S]) -> Vec<S> {
        (self.grad_phi_y)(y)
    }

    pub fn phi(&self, u: &[S], y: &[S]) -> S {
        self.phi_u(u) + self.phi_y(y)
    }

    pub fn hess_phi_u(&self, u: &[S]) -> Option<Matrix<S>> {
        self.hess_phi_u.as_ref().map(|h| h(u))
    }

    pub fn hess_phi_y(&self, y: &[S]) -> Option<Matrix<S>> {
        self.hess_phi_y.as_ref().map(|h| h(y))
    }

    pub fn quadratic_data(&self) -> Option<&QuadraticCost<S>> {
        self.quadratic.as_ref()
    }

    /// Same cost with `regularization * ||u||^2` added to the input term.
    pub fn regularized(&self, regularization: S) -> Self {
        let base_phi_u = Arc::clone(&self.phi_u);
        let base_grad_u = Arc::clone(&self.grad_phi_u);
        let two = S::of(2.0);
        let mut out = self.clone();
        out.phi_u = Arc::new(move |u: &[S]| {
            base_phi_u(u) + regularization * u.iter().map(|v| *v * *v).sum::<S>()
        });
        out.grad_phi_u = Arc::new(move |u: &[S]| {
            base_grad_u(u)
                .into_iter()
                .zip(u)
                .map(|(g, v)| g + two * regularization * *v)
                .collect()
        });
        if let Some(base_hess) = &self.hess_phi_u {
            let base_hess = Arc::clone(base_hess);
            let m = self.input_dim;
            out.hess_phi_u = Some(Arc::new(move |u: &[S]| {
                let mut h = base_hess(u);
                for i in 0..m {
                    h[(i, i)] = h[(i, i)] + two * regularization;
                }
                h
            }));
        }
        if let Some(q) = &self.quadratic {
            out.quadratic = Some(QuadraticCost {
                beta_u: q.beta_u + regularization,
                beta_y: q.beta_y,
                y_ref: q.y_ref.clone(),
            });
        }
        out
    }

    /// Checks both gradients against central finite differences on the given
    /// samples (relative tolerance 1e-5).
    pub fn validate_gradients(
        &self,
        u_samples: &[Vec<S>],
        y_samples: &[Vec<S>],
    ) -> Result<(), CostError> {
        let tol = S::of(1e-5);
        for u in u_samples {
            let dev = fd_gradient_deviation(u, |p| self.phi_u(p), &self.grad_phi_u(u));
            if dev > tol {
                return Err(CostError::GradientInconsistent {
                    which: "phi_u".into(),
                    deviation: dev.as_f64(),
                });
            }
        }
        for y in y_samples {
            let dev = fd_gradient_deviation(y, |p| self.phi_y(p), &self.grad_phi_y(y));
            if dev > tol {
                return Err(CostError::GradientInconsistent {
                    which: "phi_y".into(),
                    deviation: dev.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// Max relative deviation of `grad` from central differences of `func`.
fn fd_gradient_deviation<S: Scalar>(point: &[S], func: impl Fn(&[S]) -> S, grad: &[S]) -> S {
    let mut worst = S::zero();
    for j in 0..point.len() {
        let h = S::of(1e-6) * (S::one() + point[j].abs());
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[j] = plus[j] + h;
        minus[j] = minus[j] - h;
        let fd = (func(&plus) - func(&minus)) / (plus[j] - minus[j]);
        let scale = grad[j].abs().max(S::one());
        worst = worst.max((fd - grad[j]).abs() / scale);
    }
    worst
}
