//! Minimal dense matrix support for the small systems this crate works with
//! (plant matrices, Jacobians, sensitivities). Row-major storage, generic
//! over the scalar type.

use crate::scalar::{two_norm, Scalar};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is singular or badly conditioned")]
    Singular,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds from nested rows; panics if the rows are ragged.
    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == ncols),
            "ragged matrix rows"
        );
        Self {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// 1x1 matrix, handy for SISO sensitivities.
    pub fn scalar(value: S) -> Self {
        Self::from_rows(vec![vec![value]])
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.data.iter()
    }

    /// `A x` for a vector of length `ncols`.
    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| *a * *b)
                    .sum::<S>()
            })
            .collect()
    }

    /// `A^T x` for a vector of length `nrows`.
    pub fn tr_matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (j, out_j) in out.iter_mut().enumerate() {
                *out_j = *out_j + self[(i, j)] * xi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    /// Intended for the small square systems that arise here.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>, LinalgError> {
        let n = self.rows;
        if self.cols != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: self.cols,
            });
        }
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap_or(core::cmp::Ordering::Equal)
                })
                .unwrap();
            if a[pivot_row * n + col].abs() <= S::epsilon() * S::of(16.0) {
                return Err(LinalgError::Singular);
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                x.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] / pivot;
                if factor == S::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[row * n + j] = a[row * n + j] - factor * v;
                }
                x[row] = x[row] - factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut sum = x[col];
            for j in col + 1..n {
                sum = sum - a[col * n + j] * x[j];
            }
            x[col] = sum / a[col * n + col];
        }
        Ok(x)
    }

    /// Largest singular value, via power iteration on `A^T A`.
    pub fn spectral_norm(&self) -> S {
        if self.rows == 0 || self.cols == 0 {
            return S::zero();
        }
        if self.rows == 1 && self.cols == 1 {
            return self[(0, 0)].abs();
        }
        let mut v = vec![S::one(); self.cols];
        let norm0 = two_norm(&v);
        for v_i in v.iter_mut() {
            *v_i = *v_i / norm0;
        }
        let mut lambda = S::zero();
        for _ in 0..200 {
            let w = self.tr_matvec(&self.matvec(&v));
            let norm = two_norm(&w);
            if norm == S::zero() {
                return S::zero();
            }
            let next = norm;
            let rel = (next - lambda).abs() / next.max(S::one());
            lambda = next;
            for (v_i, w_i) in v.iter_mut().zip(&w) {
                *v_i = *w_i / norm;
            }
            if rel < S::of(1e-14) {
                break;
            }
        }
        lambda.sqrt()
    }

    /// True when every entry is `>= -tol`.
    pub fn is_nonnegative(&self, tol: S) -> bool {
        self.data.iter().all(|v| *v >= -tol)
    }

    /// Smallest eigenvalue of a symmetric matrix, via shifted power iteration.
    pub fn min_eigenvalue_symmetric(&self) -> S {
        assert_eq!(self.rows, self.cols, "square matrix required");
        let n = self.rows;
        if n == 1 {
            return self[(0, 0)];
        }
        // Gershgorin upper bound, then power-iterate shift*I - A.
        let mut shift = S::zero();
        for i in 0..n {
            let radius: S = (0..n)
                .filter(|&j| j != i)
                .map(|j| self[(i, j)].abs())
                .sum();
            shift = shift.max(self[(i, i)] + radius);
        }
        let mut v: Vec<S> = (0..n)
            .map(|i| S::of(1.0 + 0.1 * (i as f64)))
            .collect();
        let mut mu = S::zero();
        for _ in 0..500 {
            let av = self.matvec(&v);
            let w: Vec<S> = v
                .iter()
                .zip(&av)
                .map(|(vi, avi)| shift * *vi - *avi)
                .collect();
            let norm = two_norm(&w);
            if norm == S::zero() {
                return shift;
            }
            let rel = (norm - mu).abs() / norm.max(S::one());
            mu = norm;
            v = w.into_iter().map(|x| x / norm).collect();
            if rel < S::of(1e-14) {
                break;
            }
        }
        shift - mu
    }
}

impl<S: Scalar> core::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> core::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_2x2() {
        // The two-state plant matrix: A x = -(B u + Bw w) at u = w = 1.
        let a = Matrix::from_rows(vec![vec![-1.0, 1.0], vec![0.5, -1.0]]);
        let x = a.solve(&[-1.9, 0.0]).unwrap();
        assert_relative_eq!(x[0], 3.8, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.9, epsilon = 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(a.solve(&[1.0, 2.0]), Err(LinalgError::Singular));
    }

    #[test]
    fn spectral_norm_matches_hand_values() {
        assert_relative_eq!(Matrix::scalar(-3.0_f64).spectral_norm(), 3.0);
        // Diagonal matrix: spectral norm is the largest |entry|.
        let d = Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, -5.0]]);
        assert_relative_eq!(d.spectral_norm(), 5.0, epsilon = 1e-10);
        // Rank-one [[3],[4]]: norm 5.
        let r = Matrix::from_rows(vec![vec![3.0], vec![4.0]]);
        assert_relative_eq!(r.spectral_norm(), 5.0, epsilon = 1e-10);
    }

    #[test]
    fn min_eigenvalue() {
        let m = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert_relative_eq!(m.min_eigenvalue_symmetric(), 1.0, epsilon = 1e-9);
        let neg = Matrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, 4.0]]);
        assert_relative_eq!(neg.min_eigenvalue_symmetric(), -1.0, epsilon = 1e-9);
    }

    #[test]
    fn matvec_and_transpose() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.tr_matvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(m.transpose().matvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }
}
