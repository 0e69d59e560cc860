use std::ops::Range;

use crate::linalg::Lu;
use crate::matrix::Matrix;

use super::TensorError;

type Mat = Matrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Stack vertically (inputs share the column count).
    Rows,
    /// Stack horizontally (inputs share the row count).
    Cols,
}

/// Primitive operation kinds recorded on a [`Tape`](super::Tape).
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Leaf,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Exp,
    Log,
    Sigmoid,
    Tanh,
    SoftmaxCols,
    SoftmaxRows,
    /// Row softmax where `false` positions get exactly zero weight.
    MaskedSoftmaxRows(Vec<bool>),
    LogSoftmaxCols,
    Concat(Axis),
    Slice { rows: Range<usize>, cols: Range<usize> },
    /// Looks up rows of an embedding table, returning them as columns.
    Embedding(Vec<usize>),
    /// `x * mask` where the mask is a constant, pre-scaled dropout mask.
    DropoutMask,
    L2Norm,
    Inverse,
    LogDet,
    Sum,
    /// One-hot column argmax forward, identity backward.
    StraightThroughArgmax,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Matmul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Add => "add",
            OpKind::Sub => "subtract",
            OpKind::Mul => "elementwise-multiply",
            OpKind::Scale(_) => "scalar-scale",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::SoftmaxCols => "column-softmax",
            OpKind::SoftmaxRows => "row-softmax",
            OpKind::MaskedSoftmaxRows(_) => "masked-row-softmax",
            OpKind::LogSoftmaxCols => "column-log-softmax",
            OpKind::Concat(_) => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Embedding(_) => "embedding-lookup",
            OpKind::DropoutMask => "dropout-mask-apply",
            OpKind::L2Norm => "l2-norm",
            OpKind::Inverse => "matrix-inverse",
            OpKind::LogDet => "log-determinant",
            OpKind::Sum => "sum",
            OpKind::StraightThroughArgmax => "straight-through-argmax",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Leaf => Some(0),
            OpKind::Matmul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::DropoutMask => {
                Some(2)
            }
            OpKind::Concat(_) => None,
            _ => Some(1),
        }
    }
}

fn shape_err(op: &OpKind, detail: String) -> TensorError {
    TensorError::Shape {
        op: op.name(),
        detail,
    }
}

fn same_shape(op: &OpKind, a: &Mat, b: &Mat) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_slice(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in xs.iter_mut() {
        *v /= total;
    }
}

/// Forward kernel. Returns the output and an optional auxiliary value kept
/// for the backward pass.
pub(crate) fn forward(op: &OpKind, inputs: &[&Mat]) -> Result<(Mat, Option<Mat>), TensorError> {
    if let Some(n) = op.arity() {
        if inputs.len() != n {
            return Err(TensorError::Arity {
                op: op.name(),
                expected: n,
                got: inputs.len(),
            });
        }
    } else if inputs.is_empty() {
        return Err(TensorError::Arity {
            op: op.name(),
            expected: 1,
            got: 0,
        });
    }

    let out = match op {
        OpKind::Leaf => unreachable!("leaves are not computed"),
        OpKind::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.cols() != b.rows() {
                return Err(shape_err(
                    op,
                    format!("{:?} times {:?}", a.shape(), b.shape()),
                ));
            }
            a.matmul(b)
        }
        OpKind::Transpose => inputs[0].transpose(),
        OpKind::Add => {
            same_shape(op, inputs[0], inputs[1])?;
            inputs[0].zip_map(inputs[1], |a, b| a + b)
        }
        OpKind::Sub => {
            same_shape(op, inputs[0], inputs[1])?;
            inputs[0].zip_map(inputs[1], |a, b| a - b)
        }
        OpKind::Mul | OpKind::DropoutMask => {
            same_shape(op, inputs[0], inputs[1])?;
            inputs[0].zip_map(inputs[1], |a, b| a * b)
        }
        OpKind::Scale(s) => {
            let s = *s;
            inputs[0].map(|v| v * s)
        }
        OpKind::Exp => inputs[0].map(f64::exp),
        OpKind::Log => inputs[0].map(f64::ln),
        OpKind::Sigmoid => inputs[0].map(sigmoid),
        OpKind::Tanh => inputs[0].map(f64::tanh),
        OpKind::SoftmaxCols => {
            let mut t = inputs[0].transpose();
            let n = t.cols();
            for row in t.as_mut_slice().chunks_mut(n) {
                softmax_slice(row);
            }
            t.transpose()
        }
        OpKind::SoftmaxRows => {
            let mut m = inputs[0].clone();
            let n = m.cols();
            for row in m.as_mut_slice().chunks_mut(n) {
                softmax_slice(row);
            }
            m
        }
        OpKind::MaskedSoftmaxRows(mask) => {
            let x = inputs[0];
            if mask.len() != x.cols() {
                return Err(shape_err(
                    op,
                    format!("mask of length {} for {} columns", mask.len(), x.cols()),
                ));
            }
            if !mask.iter().any(|&m| m) {
                return Err(TensorError::AllMasked);
            }
            let mut m = x.clone();
            let n = m.cols();
            for row in m.as_mut_slice().chunks_mut(n) {
                let max = row
                    .iter()
                    .zip(mask)
                    .filter(|(_, &keep)| keep)
                    .map(|(&v, _)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (v, &keep) in row.iter_mut().zip(mask) {
                    *v = if keep { (*v - max).exp() } else { 0.0 };
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            m
        }
        OpKind::LogSoftmaxCols => {
            let x = inputs[0];
            let mut out = x.clone();
            for j in 0..x.cols() {
                let col = x.column(j);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for i in 0..x.rows() {
                    out[(i, j)] = x[(i, j)] - lse;
                }
            }
            out
        }
        OpKind::Concat(axis) => concat(op, *axis, inputs)?,
        OpKind::Slice { rows, cols } => {
            let x = inputs[0];
            if rows.is_empty() || cols.is_empty() || rows.end > x.rows() || cols.end > x.cols() {
                return Err(shape_err(
                    op,
                    format!("slice {:?}x{:?} of {:?}", rows, cols, x.shape()),
                ));
            }
            Matrix::from_fn(rows.len(), cols.len(), |i, j| {
                x[(rows.start + i, cols.start + j)]
            })
        }
        OpKind::Embedding(ids) => {
            let table = inputs[0];
            if ids.is_empty() {
                return Err(shape_err(op, "no ids".into()));
            }
            if let Some(&bad) = ids.iter().find(|&&id| id >= table.rows()) {
                return Err(shape_err(
                    op,
                    format!("id {} out of range for {} rows", bad, table.rows()),
                ));
            }
            Matrix::from_fn(table.cols(), ids.len(), |i, c| table[(ids[c], i)])
        }
        OpKind::L2Norm => {
            let norm = inputs[0].as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            Matrix::from_vec(1, 1, vec![norm])
        }
        OpKind::Inverse => {
            let lu = Lu::factor(inputs[0], "matrix-inverse")?;
            lu.inverse()
        }
        OpKind::LogDet => {
            let lu = Lu::factor(inputs[0], "log-determinant")?;
            let value = Matrix::from_vec(1, 1, vec![lu.log_abs_det()]);
            // d log|det A| / dA = A^{-T}
            return Ok((value, Some(lu.inverse().transpose())));
        }
        OpKind::Sum => Matrix::from_vec(1, 1, vec![inputs[0].sum()]),
        OpKind::StraightThroughArgmax => one_hot_column_argmax(inputs[0]),
    };
    Ok((out, None))
}

/// Per column, a one at the row of the largest entry (ties to the smallest row).
pub fn one_hot_column_argmax(x: &Mat) -> Mat {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let mut best = 0;
        for i in 1..x.rows() {
            if x[(i, j)] > x[(best, j)] {
                best = i;
            }
        }
        out[(best, j)] = 1.0;
    }
    out
}

fn concat(op: &OpKind, axis: Axis, inputs: &[&Mat]) -> Result<Mat, TensorError> {
    match axis {
        Axis::Rows => {
            let cols = inputs[0].cols();
            if let Some(bad) = inputs.iter().find(|m| m.cols() != cols) {
                return Err(shape_err(
                    op,
                    format!("row-concat of {} and {} columns", cols, bad.cols()),
                ));
            }
            let rows = inputs.iter().map(|m| m.rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for m in inputs {
                data.extend_from_slice(m.as_slice());
            }
            Ok(Matrix::from_vec(rows, cols, data))
        }
        Axis::Cols => {
            let rows = inputs[0].rows();
            if let Some(bad) = inputs.iter().find(|m| m.rows() != rows) {
                return Err(shape_err(
                    op,
                    format!("column-concat of {} and {} rows", rows, bad.rows()),
                ));
            }
            let cols = inputs.iter().map(|m| m.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for m in inputs {
                    data.extend_from_slice(m.row(i));
                }
            }
            Ok(Matrix::from_vec(rows, cols, data))
        }
    }
}

/// `g * b^T` for `g: m x n`, `b: k x n`.
fn matmul_nt(g: &Mat, b: &Mat) -> Mat {
    let (m, n) = g.shape();
    let k = b.rows();
    let mut out = Matrix::zeros(m, k);
    let gs = g.as_slice();
    let bs = b.as_slice();
    let os = out.as_mut_slice();
    for i in 0..m {
        let g_row = &gs[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &bs[p * n..(p + 1) * n];
            os[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * g` for `a: m x k`, `g: m x n`.
fn matmul_tn(a: &Mat, g: &Mat) -> Mat {
    let (m, k) = a.shape();
    let n = g.cols();
    let mut out = Matrix::zeros(k, n);
    let as_ = a.as_slice();
    let gs = g.as_slice();
    let os = out.as_mut_slice();
    for i in 0..m {
        let g_row = &gs[i * n..(i + 1) * n];
        for p in 0..k {
            let av = as_[i * k + p];
            if av == 0.0 {
                continue;
            }
            let o_row = &mut os[p * n..(p + 1) * n];
            for (o, &gv) in o_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Vector-Jacobian products: gradient contribution for each input.
/// `wanted[i]` is false for inputs that do not require gradients.
pub(crate) fn backward(
    op: &OpKind,
    inputs: &[&Mat],
    output: &Mat,
    aux: Option<&Mat>,
    grad: &Mat,
    wanted: &[bool],
) -> Vec<Option<Mat>> {
    let want = |i: usize| wanted[i];
    match op {
        OpKind::Leaf => vec![],
        OpKind::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            vec![
                want(0).then(|| matmul_nt(grad, b)),
                want(1).then(|| matmul_tn(a, grad)),
            ]
        }
        OpKind::Transpose => vec![Some(grad.transpose())],
        OpKind::Add => vec![want(0).then(|| grad.clone()), want(1).then(|| grad.clone())],
        OpKind::Sub => vec![
            want(0).then(|| grad.clone()),
            want(1).then(|| grad.map(|v| -v)),
        ],
        OpKind::Mul => vec![
            want(0).then(|| grad.zip_map(inputs[1], |g, b| g * b)),
            want(1).then(|| grad.zip_map(inputs[0], |g, a| g * a)),
        ],
        OpKind::DropoutMask => vec![want(0).then(|| grad.zip_map(inputs[1], |g, m| g * m)), None],
        OpKind::Scale(s) => {
            let s = *s;
            vec![Some(grad.map(|g| g * s))]
        }
        OpKind::Exp => vec![Some(grad.zip_map(output, |g, y| g * y))],
        OpKind::Log => vec![Some(grad.zip_map(inputs[0], |g, x| g / x))],
        OpKind::Sigmoid => vec![Some(grad.zip_map(output, |g, y| g * y * (1.0 - y)))],
        OpKind::Tanh => vec![Some(grad.zip_map(output, |g, y| g * (1.0 - y * y)))],
        OpKind::SoftmaxCols => {
            let mut out = Matrix::zeros(output.rows(), output.cols());
            for j in 0..output.cols() {
                let dot: f64 = (0..output.rows())
                    .map(|i| grad[(i, j)] * output[(i, j)])
                    .sum();
                for i in 0..output.rows() {
                    out[(i, j)] = output[(i, j)] * (grad[(i, j)] - dot);
                }
            }
            vec![Some(out)]
        }
        OpKind::SoftmaxRows | OpKind::MaskedSoftmaxRows(_) => {
            let mut out = Matrix::zeros(output.rows(), output.cols());
            for i in 0..output.rows() {
                let y = output.row(i);
                let g = grad.row(i);
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                for j in 0..output.cols() {
                    out[(i, j)] = y[j] * (g[j] - dot);
                }
            }
            vec![Some(out)]
        }
        OpKind::LogSoftmaxCols => {
            let mut out = grad.clone();
            for j in 0..output.cols() {
                let total: f64 = (0..output.rows()).map(|i| grad[(i, j)]).sum();
                for i in 0..output.rows() {
                    out[(i, j)] -= output[(i, j)].exp() * total;
                }
            }
            vec![Some(out)]
        }
        OpKind::Concat(axis) => {
            let mut grads = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for (idx, m) in inputs.iter().enumerate() {
                let (r, c) = m.shape();
                let g = if want(idx) {
                    Some(match axis {
                        Axis::Rows => Matrix::from_fn(r, c, |i, j| grad[(offset + i, j)]),
                        Axis::Cols => Matrix::from_fn(r, c, |i, j| grad[(i, offset + j)]),
                    })
                } else {
                    None
                };
                offset += match axis {
                    Axis::Rows => r,
                    Axis::Cols => c,
                };
                grads.push(g);
            }
            grads
        }
        OpKind::Slice { rows, cols } => {
            let x = inputs[0];
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for i in 0..rows.len() {
                for j in 0..cols.len() {
                    out[(rows.start + i, cols.start + j)] = grad[(i, j)];
                }
            }
            vec![Some(out)]
        }
        OpKind::Embedding(ids) => {
            let table = inputs[0];
            let mut out = Matrix::zeros(table.rows(), table.cols());
            for (c, &id) in ids.iter().enumerate() {
                for i in 0..table.cols() {
                    out[(id, i)] += grad[(i, c)];
                }
            }
            vec![Some(out)]
        }
        OpKind::L2Norm => {
            let norm = output[(0, 0)];
            let g = grad[(0, 0)];
            if norm == 0.0 {
                vec![Some(Matrix::zeros(inputs[0].rows(), inputs[0].cols()))]
            } else {
                vec![Some(inputs[0].map(|x| g * x / norm))]
            }
        }
        OpKind::Inverse => {
            // B = A^{-1}: dA = -B^T G B^T
            let bt = output.transpose();
            vec![Some(bt.matmul(grad).matmul(&bt).map(|v| -v))]
        }
        OpKind::LogDet => {
            let g = grad[(0, 0)];
            vec![Some(aux.expect("log-determinant keeps A^-T").map(|v| v * g))]
        }
        OpKind::Sum => {
            let g = grad[(0, 0)];
            vec![Some(Matrix::filled(inputs[0].rows(), inputs[0].cols(), g))]
        }
        OpKind::StraightThroughArgmax => vec![Some(grad.clone())],
    }
}
