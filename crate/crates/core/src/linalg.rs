//! LU factorization with partial pivoting, used for the inverse and the
//! log-determinant of the root-adjusted Laplacian.

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Real;

/// Pivots below this fraction of the largest absolute entry count as zero.
pub const SINGULAR_RELATIVE_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: matrix of size {size} is singular (pivot {pivot:e}, max |entry| {scale:e})")]
    Singular {
        op: &'static str,
        size: usize,
        pivot: f64,
        scale: f64,
    },
    #[error("{op}: expected a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
}

/// Packed `PA = LU` factorization.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    packed: Matrix<T>,
    perm: Vec<usize>,
    sign: T,
}

impl<T: Real> Lu<T> {
    /// Factorizes `a`; `op` names the calling operation in error messages.
    pub fn factor(a: &Matrix<T>, op: &'static str) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                op,
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let scale = a.max_abs();
        let tol = scale * T::lit(SINGULAR_RELATIVE_PIVOT);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();

        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tol) || best == T::zero() {
                return Err(LinalgError::Singular {
                    op,
                    size: n,
                    pivot: best.to_f64_lossy(),
                    scale: scale.to_f64_lossy(),
                });
            }
            if p != k {
                let data = lu.as_mut_slice();
                for j in 0..n {
                    data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != T::zero() {
                    for j in k + 1..n {
                        let upd = factor * lu[(k, j)];
                        lu[(i, j)] -= upd;
                    }
                }
            }
        }
        Ok(Lu {
            packed: lu,
            perm,
            sign,
        })
    }

    pub fn size(&self) -> usize {
        self.packed.rows()
    }

    /// Solves `A x = b` for a single right-hand side.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.size();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.packed[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.packed[(i, j)] * x[j];
            }
            x[i] = acc / self.packed[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.size();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// `log |det A|`.
    pub fn log_abs_det(&self) -> T {
        (0..self.size())
            .map(|i| self.packed[(i, i)].abs().ln())
            .sum()
    }

    /// Sign of `det A` (`±1`).
    pub fn det_sign(&self) -> T {
        (0..self.size()).fold(self.sign, |s, i| {
            if self.packed[(i, i)] < T::zero() {
                -s
            } else {
                s
            }
        })
    }

    pub fn det(&self) -> T {
        self.det_sign() * self.log_abs_det().exp()
    }
}

pub fn inverse<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    Ok(Lu::factor(a, "matrix-inverse")?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_inverse() {
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let inv = inverse(&a).unwrap();
        assert_eq!(inv, Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.25]]));
    }

    #[test]
    fn pivoting_and_sign() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let lu = Lu::factor(&a, "test").unwrap();
        assert_abs_diff_eq!(lu.det(), -1.0, epsilon = 1e-15);
        let b = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 1.0, 4.0], [5.0, 6.0, 0.0]]);
        let lu = Lu::factor(&b, "test").unwrap();
        assert_abs_diff_eq!(lu.det(), 1.0, epsilon = 1e-12);
        let prod = b.matmul(&lu.inverse());
        assert!(prod.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        match Lu::factor(&a, "matrix-inverse") {
            Err(LinalgError::Singular { op, size, .. }) => {
                assert_eq!(op, "matrix-inverse");
                assert_eq!(size, 2);
            }
            other => panic!("expected singular error, got {:?}", other),
        }
        assert!(Lu::factor(&Matrix::<f32>::zeros(1, 1), "x").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::from_rows(&[[4.0f32, 1.0], [2.0, 3.0]]);
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(2)) < 1e-6);
    }
}
