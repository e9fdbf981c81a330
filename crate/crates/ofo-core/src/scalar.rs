//! Scalar abstraction for the numeric core.
//!
//! Every module in this crate is generic over [`Scalar`], so the same code
//! runs in `f32` or `f64`. The concrete aliases most users want live at the
//! crate root.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + core::iter::Sum
    + core::fmt::Debug
    + core::fmt::Display
    + core::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for values a float type
    /// cannot represent at all (never the case for finite tolerances).
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }

    /// Lossy view as `f64`, for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Infinity norm of a vector; zero for the empty vector.
pub fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, x| acc.max(x.abs()))
}

/// Euclidean norm.
pub fn two_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|x| *x * *x).sum::<S>().sqrt()
}

/// Infinity norm of the difference of two equally sized vectors.
pub fn inf_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}

/// Euclidean distance of two equally sized vectors.
pub fn two_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<S>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        assert_eq!(inf_norm(&[1.0_f64, -3.0, 2.0]), 3.0);
        assert_eq!(two_norm(&[3.0_f64, 4.0]), 5.0);
        assert_eq!(inf_dist(&[1.0_f64, 1.0], &[0.0, 3.0]), 2.0);
        assert_eq!(inf_norm::<f64>(&[]), 0.0);
    }

    #[test]
    fn scalar_of_roundtrip() {
        assert_eq!(f64::of(1e-12), 1e-12);
        assert_eq!(f32::of(0.5), 0.5_f32);
    }
}
