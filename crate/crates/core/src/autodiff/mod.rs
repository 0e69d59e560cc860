//! Tape-based reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every tensor is at most two dimensional; vectors are `n x 1` columns and
//! scalars are `1 x 1`. Values are recorded on a [`Tape`] in topological
//! order, and [`Tape::backward`] replays the tape in reverse.

mod ops;

use std::ops::Range;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::matrix::Matrix;

pub use ops::{one_hot_column_argmax, Axis, OpKind};

type Mat = Matrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("every position is masked")]
    AllMasked,
    #[error("backward needs a scalar loss, node has shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("invalid tensor: {0}")]
    Invalid(String),
    #[error(transparent)]
    Singular(#[from] LinalgError),
}

/// Dense tensor value, optionally marked as requiring gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    value: Mat,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor from a shape of rank one (a column) or two.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let (rows, cols) = match *shape {
            [n] => (n, 1),
            [r, c] => (r, c),
            _ => {
                return Err(TensorError::Invalid(format!(
                    "rank {} is not supported",
                    shape.len()
                )))
            }
        };
        if rows == 0 || cols == 0 {
            return Err(TensorError::Invalid(format!("zero dimension in {:?}", shape)));
        }
        if rows * cols != data.len() {
            return Err(TensorError::Invalid(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor {
            value: Matrix::from_vec(rows, cols, data),
            requires_grad: false,
        })
    }

    pub fn from_matrix(value: Mat) -> Self {
        Tensor {
            value,
            requires_grad: false,
        }
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.value.rows(), self.value.cols()]
    }

    pub fn data(&self) -> &[f64] {
        self.value.as_slice()
    }

    pub fn matrix(&self) -> &Mat {
        &self.value
    }
}

/// Handle to a node recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: OpKind,
    inputs: Vec<Var>,
    value: Mat,
    aux: Option<Mat>,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
///
/// Inputs always precede the operations that consume them, so a single
/// reverse sweep computes all gradients.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(Node {
            op: OpKind::Leaf,
            inputs: Vec::new(),
            value: tensor.value,
            aux: None,
            requires_grad: tensor.requires_grad,
        })
    }

    /// Leaf that requires gradients.
    pub fn param(&mut self, value: Mat) -> Var {
        self.leaf(Tensor::from_matrix(value).requires_grad(true))
    }

    /// Leaf that does not require gradients.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(Tensor::from_matrix(value))
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records `op` applied to `inputs`.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var, TensorError> {
        if op == OpKind::Leaf {
            return Err(TensorError::Invalid("leaves are created with Tape::leaf".into()));
        }
        let values: Vec<&Mat> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, aux) = ops::forward(&op, &values)?;
        let requires_grad = match op {
            OpKind::DropoutMask => self.nodes[inputs[0].0].requires_grad,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        Ok(self.push(Node {
            op,
            inputs: inputs.to_vec(),
            value,
            aux,
            requires_grad,
        }))
    }

    fn must(&mut self, op: OpKind, inputs: &[Var]) -> Var {
        match self.apply(op, inputs) {
            Ok(v) => v,
            Err(e) => panic!("contract violation: {}", e),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.must(OpKind::Matmul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        self.must(OpKind::Transpose, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.must(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.must(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.must(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.must(OpKind::Scale(s), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.must(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.must(OpKind::Log, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.must(OpKind::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.must(OpKind::Tanh, &[a])
    }

    pub fn softmax_cols(&mut self, a: Var) -> Var {
        self.must(OpKind::SoftmaxCols, &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.must(OpKind::SoftmaxRows, &[a])
    }

    pub fn masked_softmax_rows(&mut self, a: Var, mask: Vec<bool>) -> Result<Var, TensorError> {
        self.apply(OpKind::MaskedSoftmaxRows(mask), &[a])
    }

    pub fn log_softmax_cols(&mut self, a: Var) -> Var {
        self.must(OpKind::LogSoftmaxCols, &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Var {
        if parts.len() == 1 {
            return parts[0];
        }
        self.must(OpKind::Concat(axis), parts)
    }

    pub fn slice(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Var {
        self.must(OpKind::Slice { rows, cols }, &[a])
    }

    /// Rows `rows` of a matrix.
    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Var {
        let cols = self.shape(a).1;
        self.slice(a, rows, 0..cols)
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let rows = self.shape(a).0;
        self.slice(a, 0..rows, j..j + 1)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        self.must(OpKind::Embedding(ids.to_vec()), &[table])
    }

    pub fn dropout(&mut self, a: Var, mask: Var) -> Var {
        self.must(OpKind::DropoutMask, &[a, mask])
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        self.must(OpKind::L2Norm, &[a])
    }

    pub fn inverse(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::Inverse, &[a])
    }

    pub fn logdet(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(OpKind::LogDet, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.must(OpKind::Sum, &[a])
    }

    pub fn straight_through_argmax(&mut self, a: Var) -> Var {
        self.must(OpKind::StraightThroughArgmax, &[a])
    }

    /// Re-executes every recorded operation from the same leaves.
    pub fn replay(&self) -> Result<Tape, TensorError> {
        let mut out = Tape::new();
        for node in &self.nodes {
            match node.op {
                OpKind::Leaf => {
                    out.push(node.clone());
                }
                _ => {
                    out.apply(node.op.clone(), &node.inputs)?;
                }
            }
        }
        Ok(out)
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.op == OpKind::Leaf {
                continue;
            }
            let grad = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let values: Vec<&Mat> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let wanted: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads =
                ops::backward(&node.op, &values, &node.value, node.aux.as_ref(), &grad, &wanted);
            for ((input, g), want) in node.inputs.iter().zip(input_grads).zip(&wanted) {
                let Some(g) = g else { continue };
                if !want {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut leaf_grads = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.op == OpKind::Leaf && node.requires_grad {
                let g = grads
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()));
                leaf_grads.push((Var(idx), g));
            }
        }
        Ok(Gradients { leaf_grads })
    }
}

/// Gradients of a scalar loss with respect to every `requires_grad` leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    leaf_grads: Vec<(Var, Mat)>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<&Mat> {
        self.leaf_grads
            .binary_search_by_key(&leaf, |(v, _)| *v)
            .ok()
            .map(|i| &self.leaf_grads[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Mat)> {
        self.leaf_grads.iter().map(|(v, g)| (*v, g))
    }

    pub fn len(&self) -> usize {
        self.leaf_grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_grads.is_empty()
    }
}
