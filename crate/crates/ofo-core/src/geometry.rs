//! Boxes, orthant orders, and the tangent-cone projection everything else
//! builds on.
//!
//! Constraint sets are axis-aligned boxes, possibly unbounded in some
//! coordinates. The projection of a drift direction onto the tangent cone of
//! a box has a closed componentwise form: pass-through strictly inside,
//! one-sided clamping on a face.

use crate::scalar::Scalar;
use thiserror::Error;

/// Drift from time integration may park points this far outside a box; they
/// are clamped back before projecting.
pub const BOX_MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point outside the box at coordinate {index}: value {value}, bounds [{lower}, {upper}]")]
    PointOutsideBox {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("operation requires a compact box, but coordinate {index} is unbounded")]
    UnboundedBox { index: usize },
    #[error("invalid bounds at coordinate {index}: lower {lower} > upper {upper}")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("orthant signs must be +1 or -1, found {found} at coordinate {index}")]
    InvalidSign { index: usize, found: i8 },
    #[error("empty box (dimension zero)")]
    EmptyBox,
}

/// Axis-aligned box set; entries of `lower`/`upper` may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet<S> {
    lower: Vec<S>,
    upper: Vec<S>,
}

impl<S: Scalar> BoxSet<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Result<Self, GeometryError> {
        if lower.is_empty() {
            return Err(GeometryError::EmptyBox);
        }
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(*lo <= *hi) {
                return Err(GeometryError::InvalidBounds {
                    index: i,
                    lower: lo.as_f64(),
                    upper: hi.as_f64(),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional interval.
    pub fn interval(lower: S, upper: S) -> Result<Self, GeometryError> {
        Self::new(vec![lower], vec![upper])
    }

    /// Box with every coordinate unbounded (projection passes through).
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![S::neg_infinity(); dim],
            upper: vec![S::infinity(); dim],
        }
    }

    /// Cartesian product `self x other`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.extend_from_slice(&other.lower);
        upper.extend_from_slice(&other.upper);
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[S] {
        &self.lower
    }

    pub fn upper(&self) -> &[S] {
        &self.upper
    }

    pub fn is_compact(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    /// Largest absolute bound across all coordinates.
    pub fn radius(&self) -> Result<S, GeometryError> {
        let mut r = S::zero();
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(GeometryError::UnboundedBox { index: i });
            }
            r = r.max(lo.abs()).max(hi.abs());
        }
        Ok(r)
    }

    /// Euclidean projection onto the box (componentwise clamp).
    pub fn project(&self, point: &[S]) -> Vec<S> {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(p, (lo, hi))| p.max(*lo).min(*hi))
            .collect()
    }

    pub fn contains(&self, point: &[S], tol: S) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (lo, hi))| *p >= *lo - tol && *p <= *hi + tol)
    }

    /// Clamps a point to the box, erroring if any coordinate lies more than
    /// `tol` outside.
    pub fn clamp_within(&self, point: &[S], tol: S) -> Result<Vec<S>, GeometryError> {
        if point.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        let mut out = Vec::with_capacity(point.len());
        for (i, (p, (lo, hi))) in point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .enumerate()
        {
            if *p < *lo - tol || *p > *hi + tol {
                return Err(GeometryError::PointOutsideBox {
                    index: i,
                    value: p.as_f64(),
                    lower: lo.as_f64(),
                    upper: hi.as_f64(),
                });
            }
            out.push(p.max(*lo).min(*hi));
        }
        Ok(out)
    }

    /// Center of a compact box.
    pub fn midpoint(&self) -> Result<Vec<S>, GeometryError> {
        let half = S::of(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .enumerate()
            .map(|(i, (lo, hi))| {
                if lo.is_finite() && hi.is_finite() {
                    Ok((*lo + *hi) * half)
                } else {
                    Err(GeometryError::UnboundedBox { index: i })
                }
            })
            .collect()
    }

    /// Corners of a compact box, at most `cap` of them (all corners when
    /// `2^dim <= cap`, otherwise the first `cap` in binary order).
    pub fn corners(&self, cap: usize) -> Result<Vec<Vec<S>>, GeometryError> {
        if !self.is_compact() {
            let index = self
                .lower
                .iter()
                .position(|v| !v.is_finite())
                .unwrap_or(0);
            return Err(GeometryError::UnboundedBox { index });
        }
        let dim = self.dim();
        let total = if dim < usize::BITS as usize {
            1usize << dim
        } else {
            usize::MAX
        };
        let count = total.min(cap);
        let mut out = Vec::with_capacity(count);
        for mask in 0..count {
            out.push(
                (0..dim)
                    .map(|i| {
                        if mask >> i & 1 == 0 {
                            self.lower[i]
                        } else {
                            self.upper[i]
                        }
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Box grown by `fraction` of each coordinate's width (used to keep
    /// finite-difference probes legal near faces).
    pub fn inflated(&self, fraction: S) -> Self {
        let lower = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| {
                if lo.is_finite() && hi.is_finite() {
                    *lo - (*hi - *lo) * fraction
                } else {
                    *lo
                }
            })
            .collect();
        let upper = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(hi, lo)| {
                if lo.is_finite() && hi.is_finite() {
                    *hi + (*hi - *lo) * fraction
                } else {
                    *hi
                }
            })
            .collect();
        Self { lower, upper }
    }

    /// Evenly spaced grid with `per_dim` points per coordinate (endpoints
    /// included). Intended for compact boxes.
    pub fn grid(&self, per_dim: usize) -> Result<Vec<Vec<S>>, GeometryError> {
        if !self.is_compact() {
            let index = self
                .lower
                .iter()
                .position(|v| !v.is_finite())
                .unwrap_or(0);
            return Err(GeometryError::UnboundedBox { index });
        }
        let per_dim = per_dim.max(2);
        let dim = self.dim();
        let mut points = vec![vec![]];
        for i in 0..dim {
            let mut next = Vec::with_capacity(points.len() * per_dim);
            for base in &points {
                for k in 0..per_dim {
                    let t = S::of(k as f64 / (per_dim - 1) as f64);
                    let v = self.lower[i] + (self.upper[i] - self.lower[i]) * t;
                    let mut p: Vec<S> = base.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// Projects a drift direction onto the tangent cone of `boxset` at `point`.
///
/// Componentwise: pass-through strictly inside, `max(0, v)` at the lower
/// face, `min(0, v)` at the upper face, and zero on a degenerate face
/// (`lower == upper`). The point is clamped to the box first; points more
/// than [`BOX_MEMBERSHIP_TOL`] outside are an error.
pub fn project_tangent<S: Scalar>(
    point: &[S],
    direction: &[S],
    boxset: &BoxSet<S>,
) -> Result<Vec<S>, GeometryError> {
    if direction.len() != boxset.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: boxset.dim(),
            found: direction.len(),
        });
    }
    let point = boxset.clamp_within(point, S::of(BOX_MEMBERSHIP_TOL))?;
    let mut out = Vec::with_capacity(direction.len());
    for i in 0..direction.len() {
        let (lo, hi, p, v) = (boxset.lower[i], boxset.upper[i], point[i], direction[i]);
        let r = if lo == hi {
            S::zero()
        } else if p == lo {
            v.max(S::zero())
        } else if p == hi {
            v.min(S::zero())
        } else {
            v
        };
        out.push(r);
    }
    Ok(out)
}

/// Infinity norm of the tangent-cone projection of `direction` at `point`;
/// the stationarity residual for projected dynamics.
pub fn projected_residual_inf<S: Scalar>(
    point: &[S],
    direction: &[S],
    boxset: &BoxSet<S>,
) -> Result<S, GeometryError> {
    Ok(crate::scalar::inf_norm(&project_tangent(
        point, direction, boxset,
    )?))
}

/// Partial order induced by an orthant: a sign pattern per coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthantOrder {
    signs: Vec<i8>,
}

impl OrthantOrder {
    /// Standard elementwise order (all signs +1).
    pub fn standard(dim: usize) -> Self {
        Self {
            signs: vec![1; dim],
        }
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self, GeometryError> {
        for (i, s) in signs.iter().enumerate() {
            if *s != 1 && *s != -1 {
                return Err(GeometryError::InvalidSign {
                    index: i,
                    found: *s,
                });
            }
        }
        Ok(Self { signs })
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// The opposite order (every sign flipped).
    pub fn opposite(&self) -> Self {
        Self {
            signs: self.signs.iter().map(|s| -s).collect(),
        }
    }

    /// `x <= y` in this order, with slack `tol >= 0` per coordinate.
    pub fn leq_with_tol<S: Scalar>(&self, x: &[S], y: &[S], tol: S) -> Result<bool, GeometryError> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: if x.len() != self.dim() { x.len() } else { y.len() },
            });
        }
        Ok(self.signs.iter().zip(x.iter().zip(y)).all(|(s, (xi, yi))| {
            let diff = *yi - *xi;
            let signed = if *s > 0 { diff } else { -diff };
            signed >= -tol
        }))
    }

    pub fn leq<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<bool, GeometryError> {
        self.leq_with_tol(x, y, S::zero())
    }
}

/// `x <= y` under `order` (i.e. `y - x` lies in the orthant).
pub fn orthant_leq<S: Scalar>(
    x: &[S],
    y: &[S],
    order: &OrthantOrder,
) -> Result<bool, GeometryError> {
    order.leq(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> BoxSet<f64> {
        BoxSet::interval(-0.7, 1.0).unwrap()
    }

    #[test]
    fn tangent_projection_cases() {
        let b = unit_box();
        // interior: pass-through
        assert_eq!(project_tangent(&[0.2], &[-3.0], &b).unwrap(), vec![-3.0]);
        // lower face: outward component clipped
        assert_eq!(project_tangent(&[-0.7], &[-2.0], &b).unwrap(), vec![0.0]);
        assert_eq!(project_tangent(&[-0.7], &[2.0], &b).unwrap(), vec![2.0]);
        // upper face
        assert_eq!(project_tangent(&[1.0], &[0.5], &b).unwrap(), vec![0.0]);
        assert_eq!(project_tangent(&[1.0], &[-0.5], &b).unwrap(), vec![-0.5]);
    }

    #[test]
    fn tangent_projection_degenerate_and_unbounded() {
        let pinned = BoxSet::new(vec![0.3, f64::NEG_INFINITY], vec![0.3, f64::INFINITY]).unwrap();
        let r = project_tangent(&[0.3, 5.0], &[1.0, -2.0], &pinned).unwrap();
        assert_eq!(r, vec![0.0, -2.0]);
    }

    #[test]
    fn tangent_projection_clamps_drifted_points() {
        let b = unit_box();
        // a hair outside: clamped to the face, then projected
        let r = project_tangent(&[1.0 + 1e-13], &[0.5], &b).unwrap();
        assert_eq!(r, vec![0.0]);
        // too far outside: error
        let err = project_tangent(&[1.0 + 1e-9], &[0.5], &b).unwrap_err();
        assert!(matches!(err, GeometryError::PointOutsideBox { .. }));
    }

    #[test]
    fn tangent_projection_dimension_mismatch() {
        let b = unit_box();
        assert!(matches!(
            project_tangent(&[0.0], &[1.0, 2.0], &b),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn box_radius_examples() {
        assert_eq!(unit_box().radius().unwrap(), 1.0);
        assert_eq!(BoxSet::interval(0.0, 0.6).unwrap().radius().unwrap(), 0.6);
        let b2 = BoxSet::new(vec![-3.0, -1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(b2.radius().unwrap(), 3.0);
        assert!(matches!(
            BoxSet::<f64>::unbounded(2).radius(),
            Err(GeometryError::UnboundedBox { .. })
        ));
    }

    #[test]
    fn orthant_order_examples() {
        let std2 = OrthantOrder::standard(2);
        assert!(orthant_leq(&[0.0, 0.0], &[1.0, 1.0], &std2).unwrap());
        assert!(!orthant_leq(&[0.0, 2.0], &[1.0, 1.0], &std2).unwrap());
        let rev = OrthantOrder::from_signs(vec![-1, -1]).unwrap();
        assert!(orthant_leq(&[1.0, 1.0], &[0.0, 0.0], &rev).unwrap());
        assert_eq!(rev.opposite(), OrthantOrder::standard(2));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            BoxSet::new(vec![1.0], vec![0.0]),
            Err(GeometryError::InvalidBounds { .. })
        ));
        assert!(matches!(
            OrthantOrder::from_signs(vec![1, 0]),
            Err(GeometryError::InvalidSign { .. })
        ));
    }

    #[test]
    fn corners_and_midpoint() {
        let b = BoxSet::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let corners = b.corners(64).unwrap();
        assert_eq!(corners.len(), 4);
        assert!(corners.contains(&vec![0.0, -1.0]));
        assert!(corners.contains(&vec![1.0, 1.0]));
        assert_eq!(b.midpoint().unwrap(), vec![0.5, 0.0]);
        assert_eq!(b.grid(3).unwrap().len(), 9);
    }
}
