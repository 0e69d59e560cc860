//! Numeric core: dense matrices generic over the scalar type, LU-based
//! inverse and log-determinant, a reverse-mode autodiff tape, and exact
//! inference over non-projective dependency trees.

pub mod autodiff;
pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod matrix_tree;
pub mod rng;
pub mod scalar;

pub use autodiff::{Axis, Gradients, OpKind, Tape, Tensor, TensorError, Var};
pub use linalg::LinalgError;
pub use matrix::Matrix;
pub use matrix_tree::{Marginals, MatrixTreeError, TreeSample};
pub use rng::SeededRng;
pub use scalar::Real;

/// Double-precision matrix, the storage type of every tape value.
pub type Mat = Matrix<f64>;
pub type Mat32 = Matrix<f32>;
pub type Marginals64 = Marginals<f64>;
pub type Marginals32 = Marginals<f32>;
