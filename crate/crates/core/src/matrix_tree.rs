//! Exact inference over non-projective dependency trees via Kirchhoff's
//! Matrix-Tree theorem.
//!
//! Scores follow the head-selection convention: `phi[(i, j)]` scores word `i`
//! heading word `j`, and the diagonal `phi[(j, j)]` scores `j` being the root.
//! Every word selects exactly one entry from its own column, so adding a
//! constant to a column rescales every tree weight by the same factor. The
//! marginal computation relies on that to shift each column's maximum to zero
//! before exponentiating.

use thiserror::Error;

use crate::autodiff::{Tape, TensorError, Var};
use crate::linalg::{LinalgError, Lu};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Largest sentence length [`enumerate_oracle`] accepts.
pub const ORACLE_MAX_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixTreeError {
    #[error("score matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("score matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("root-adjusted Laplacian is singular for a sentence of length {len} (max |phi| = {max_abs_phi:e})")]
    Singular { len: usize, max_abs_phi: f64 },
    #[error("enumeration supports at most {limit} words, got {len}")]
    TooLarge { len: usize, limit: usize },
    #[error(transparent)]
    Tensor(TensorError),
}

/// Edge marginals `beta[(i, j)] = p(i heads j)` with root probabilities on
/// the diagonal, plus `log Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<T> {
    pub beta: Matrix<T>,
    pub log_partition: T,
}

/// Head assignment of a single-rooted arborescence; `head[r] == r` marks the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeSample {
    head: Vec<usize>,
}

impl TreeSample {
    /// Validates that `head` has exactly one root and no cycles.
    pub fn new(head: Vec<usize>) -> Option<Self> {
        if is_arborescence(&head) {
            Some(TreeSample { head })
        } else {
            None
        }
    }

    pub fn heads(&self) -> &[usize] {
        &self.head
    }

    pub fn root(&self) -> usize {
        self.head
            .iter()
            .enumerate()
            .find(|&(j, &h)| h == j)
            .map(|(j, _)| j)
            .expect("validated tree has a root")
    }

    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }

    /// `sum_j phi[(head[j], j)]`, the root contributing its diagonal score.
    pub fn log_weight<T: Real>(&self, phi: &Matrix<T>) -> T {
        self.head
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, &h)| acc + phi[(h, j)])
    }
}

/// True when `head` (with `head[r] == r` for the root) has exactly one root,
/// all heads in range, and every word reaches the root.
pub fn is_arborescence(head: &[usize]) -> bool {
    let n = head.len();
    if n == 0 || head.iter().any(|&h| h >= n) {
        return false;
    }
    if head.iter().enumerate().filter(|&(j, &h)| h == j).count() != 1 {
        return false;
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches the root
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut v = start;
        loop {
            match state[v] {
                2 => break,
                1 => return false,
                _ => {}
            }
            if head[v] == v {
                state[v] = 2;
                break;
            }
            state[v] = 1;
            path.push(v);
            v = head[v];
        }
        for p in path {
            state[p] = 2;
        }
    }
    true
}

fn validate<T: Real>(phi: &Matrix<T>) -> Result<(), MatrixTreeError> {
    if !phi.is_square() || phi.rows() == 0 {
        return Err(MatrixTreeError::Shape {
            rows: phi.rows(),
            cols: phi.cols(),
        });
    }
    for i in 0..phi.rows() {
        for j in 0..phi.cols() {
            if !phi[(i, j)].is_finite() {
                return Err(MatrixTreeError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// `L[(j, j)] = sum_{k != j} exp(phi[(k, j)])`, `L[(i, j)] = -exp(phi[(i, j)])`.
pub fn laplacian<T: Real>(phi: &Matrix<T>) -> Result<Matrix<T>, MatrixTreeError> {
    validate(phi)?;
    let n = phi.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = T::zero();
        for i in 0..n {
            if i != j {
                let w = phi[(i, j)].exp();
                l[(i, j)] = -w;
                diag += w;
            }
        }
        l[(j, j)] = diag;
    }
    Ok(l)
}

/// The Laplacian with its first row replaced by the root weights
/// `exp(phi[(j, j)])`.
pub fn root_laplacian<T: Real>(phi: &Matrix<T>) -> Result<Matrix<T>, MatrixTreeError> {
    let mut l = laplacian(phi)?;
    for j in 0..phi.cols() {
        l[(0, j)] = phi[(j, j)].exp();
    }
    Ok(l)
}

fn column_maxima<T: Real>(phi: &Matrix<T>) -> Vec<T> {
    (0..phi.cols())
        .map(|j| {
            (0..phi.rows())
                .map(|i| phi[(i, j)])
                .fold(T::neg_infinity(), T::max)
        })
        .collect()
}

fn singular<T: Real>(phi: &Matrix<T>) -> MatrixTreeError {
    MatrixTreeError::Singular {
        len: phi.rows(),
        max_abs_phi: phi.max_abs().to_f64_lossy(),
    }
}

/// Exact head-selection marginals and log-partition function.
pub fn marginals<T: Real>(phi: &Matrix<T>) -> Result<Marginals<T>, MatrixTreeError> {
    validate(phi)?;
    let n = phi.rows();
    let shift = column_maxima(phi);
    let stable = Matrix::from_fn(n, n, |i, j| phi[(i, j)] - shift[j]);
    let lhat = root_laplacian(&stable)?;
    let lu = Lu::factor(&lhat, "matrix-inverse").map_err(|_| singular(phi))?;
    let inv = lu.inverse();

    let mut beta = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let w = stable[(i, j)].exp();
            beta[(i, j)] = if i == j {
                w * inv[(j, 0)]
            } else {
                let from_diag = if j != 0 { w * inv[(j, j)] } else { T::zero() };
                let from_row = if i != 0 { w * inv[(j, i)] } else { T::zero() };
                from_diag - from_row
            };
        }
    }
    let log_partition = lu.log_abs_det() + shift.iter().copied().sum::<T>();
    Ok(Marginals {
        beta,
        log_partition,
    })
}

/// Every single-rooted arborescence over `n` words, in lexicographic order of
/// the head vector.
pub fn enumerate_trees(n: usize) -> Result<Vec<TreeSample>, MatrixTreeError> {
    if n > ORACLE_MAX_LEN {
        return Err(MatrixTreeError::TooLarge {
            len: n,
            limit: ORACLE_MAX_LEN,
        });
    }
    let mut out = Vec::new();
    if n == 0 {
        return Ok(out);
    }
    let mut head = vec![0usize; n];
    loop {
        if is_arborescence(&head) {
            out.push(TreeSample { head: head.clone() });
        }
        // odometer increment, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            head[pos] += 1;
            if head[pos] < n {
                break;
            }
            head[pos] = 0;
        }
    }
}

/// Brute-force marginals by enumerating every tree. Exponential in `n`.
pub fn enumerate_oracle<T: Real>(phi: &Matrix<T>) -> Result<Marginals<T>, MatrixTreeError> {
    validate(phi)?;
    let n = phi.rows();
    let trees = enumerate_trees(n)?;
    let log_weights: Vec<T> = trees.iter().map(|t| t.log_weight(phi)).collect();
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: T = weights.iter().copied().sum();

    let mut beta = Matrix::zeros(n, n);
    for (tree, &w) in trees.iter().zip(&weights) {
        for (j, &h) in tree.heads().iter().enumerate() {
            beta[(h, j)] += w;
        }
    }
    let beta = beta.map(|v| v / total);
    Ok(Marginals {
        beta,
        log_partition: max + total.ln(),
    })
}

/// Per column, a one at the most probable head (root on the diagonal);
/// ties go to the smallest index. The result need not be a tree.
pub fn hard_select<T: Real>(beta: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(beta.rows(), beta.cols());
    for j in 0..beta.cols() {
        let mut best = 0;
        for i in 1..beta.rows() {
            if beta[(i, j)] > beta[(best, j)] {
                best = i;
            }
        }
        out[(best, j)] = T::one();
    }
    out
}

/// Tape nodes produced by [`marginals_on_tape`].
#[derive(Debug, Clone, Copy)]
pub struct TapeMarginals {
    pub beta: Var,
    pub log_partition: Var,
}

/// Differentiable version of [`marginals`]: gradients flow from `beta` and
/// `log_partition` back to `phi`.
pub fn marginals_on_tape(tape: &mut Tape, phi: Var) -> Result<TapeMarginals, MatrixTreeError> {
    let phi_value = tape.value(phi).clone();
    validate(&phi_value)?;
    let n = phi_value.rows();
    let shift = column_maxima(&phi_value);

    // Column shifts are constants: the shifted problem has the same
    // marginals, and log Z is restored by adding the shifts back.
    let shift_m = tape.constant(Matrix::from_fn(n, n, |_, j| shift[j]));
    let eye = tape.constant(Matrix::identity(n));
    let off_diag = tape.constant(Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }));
    let ones_row = tape.constant(Matrix::filled(1, n, 1.0));
    let ones_col = tape.constant(Matrix::filled(n, 1, 1.0));
    let rest_rows = tape.constant(Matrix::from_fn(n, n, |i, _| if i == 0 { 0.0 } else { 1.0 }));
    let rest_cols = tape.constant(Matrix::from_fn(n, n, |_, j| if j == 0 { 0.0 } else { 1.0 }));
    let first = tape.constant(Matrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 }));

    let shifted = tape.sub(phi, shift_m);
    let weights = tape.exp(shifted);
    let edge_w = tape.mul(weights, off_diag);

    // Laplacian
    let in_weight = tape.matmul(ones_row, edge_w);
    let in_weight_rows = tape.matmul(ones_col, in_weight);
    let degree = tape.mul(in_weight_rows, eye);
    let lap = tape.sub(degree, edge_w);

    // first row replaced by root weights
    let diag_w = tape.mul(weights, eye);
    let root_w = tape.matmul(ones_row, diag_w);
    let lap_rest = tape.mul(lap, rest_rows);
    let root_row = tape.matmul(first, root_w);
    let lhat = tape.add(lap_rest, root_row);

    let tensor_err = |e: TensorError| match e {
        TensorError::Singular(LinalgError::Singular { .. }) => singular(&phi_value),
        other => MatrixTreeError::Tensor(other),
    };
    let inv = tape.inverse(lhat).map_err(tensor_err)?;

    // off-diagonal: w_ij * ([inv]_jj (j != 0) - [inv]_ji (i != 0))
    let inv_diag = tape.mul(inv, eye);
    let inv_diag_row = tape.matmul(ones_row, inv_diag);
    let inv_diag_rows = tape.matmul(ones_col, inv_diag_row);
    let term_diag = tape.mul(inv_diag_rows, rest_cols);
    let inv_t = tape.transpose(inv);
    let term_row = tape.mul(inv_t, rest_rows);
    let diff = tape.sub(term_diag, term_row);
    let beta_off = tape.mul(edge_w, diff);

    // diagonal: w_kk * [inv]_k0
    let inv_first_col = tape.column(inv, 0);
    let inv_first = tape.transpose(inv_first_col);
    let root_prob = tape.mul(root_w, inv_first);
    let root_rows = tape.matmul(ones_col, root_prob);
    let beta_diag = tape.mul(root_rows, eye);

    let beta = tape.add(beta_off, beta_diag);

    let logdet = tape.logdet(lhat).map_err(tensor_err)?;
    let total_shift = tape.constant(Matrix::filled(1, 1, shift.iter().sum::<f64>()));
    let log_partition = tape.add(logdet, total_shift);
    Ok(TapeMarginals {
        beta,
        log_partition,
    })
}

/// Straight-through hard selection: one-hot columns forward, identity backward.
pub fn hard_select_on_tape(tape: &mut Tape, beta: Var) -> Var {
    tape.straight_through_argmax(beta)
}
