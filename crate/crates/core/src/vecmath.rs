//! Dense row-major matrices and small vector helpers.
//!
//! Deliberately minimal: the models only need row access, dot products, and
//! norms, and keeping the storage flat makes checkpoints trivially
//! byte-stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Applies `row[j] -= step * grad[j]` to one row.
    pub fn sub_scaled_row(&mut self, i: usize, step: S, grad: &[S]) {
        let row = self.row_mut(i);
        debug_assert_eq!(row.len(), grad.len());
        for (x, g) in row.iter_mut().zip(grad) {
            *x = *x - step * *g;
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Dot product of two equal-length slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Squared Euclidean norm.
pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

/// Euclidean norm.
pub fn norm<S: Scalar>(a: &[S]) -> S {
    norm_sq(a).sqrt()
}

/// Scales `a` in place to unit Euclidean norm; zero vectors are left alone.
pub fn normalize<S: Scalar>(a: &mut [S]) {
    let n = norm(a);
    if n > S::zero() {
        for x in a.iter_mut() {
            *x = *x / n;
        }
    }
}

/// `out[j] += c * a[j]`.
pub fn add_scaled<S: Scalar>(out: &mut [S], c: S, a: &[S]) {
    debug_assert_eq!(out.len(), a.len());
    for (o, &x) in out.iter_mut().zip(a) {
        *o = *o + c * x;
    }
}

/// Numerically stable softmax. Panics on empty input; callers guard that.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    assert!(!logits.is_empty(), "softmax over empty slice");
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |m, x| if x > m { x } else { m });
    let exps: Vec<S> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Logistic function 1 / (1 + e^-x), computed without overflow on either tail.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matrix_layout_is_row_major() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 3);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn dot_and_norms() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(norm_sq(&[3.0, 4.0]), 25.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn normalize_unit_and_zero() {
        let mut v = vec![3.0, 4.0];
        normalize(&mut v);
        assert_relative_eq!(norm(&v), 1.0, max_relative = 1e-15);
        let mut z = vec![0.0, 0.0];
        normalize(&mut z);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn softmax_of_known_logits() {
        // logits (1, 0): weights (e/(e+1), 1/(e+1)).
        let w = softmax(&[1.0f64, 0.0]);
        let e = 1.0f64.exp();
        assert_relative_eq!(w[0], e / (e + 1.0), max_relative = 1e-15);
        assert_relative_eq!(w[1], 1.0 / (e + 1.0), max_relative = 1e-15);
        assert_relative_eq!(w[0] + w[1], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let w = softmax(&[1000.0f64, 999.0]);
        assert!(w.iter().all(|x| x.is_finite()));
        assert_relative_eq!(w[0] + w[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sigmoid_reference_values() {
        // σ(2) to 16 significant digits.
        assert_relative_eq!(sigmoid(2.0f64), 0.8807970779778823, max_relative = 1e-15);
        assert_eq!(sigmoid(0.0f64), 0.5);
        // Strictly inside (0,1) over the range where f64 can represent it.
        assert!(sigmoid(-36.0f64) > 0.0);
        assert!(sigmoid(36.0f64) < 1.0);
        // The tails saturate but stay finite and in range.
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_relative_eq!(sigmoid(3.0f64) + sigmoid(-3.0f64), 1.0, max_relative = 1e-15);
    }
}
