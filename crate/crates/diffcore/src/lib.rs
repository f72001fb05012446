//! Differentiable array substrate: an append-only reverse-mode tape over dense
//! row-major arrays, a constant sparse operator type, Adam, a finite-difference
//! gradient oracle and the parameter checkpoint format.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod exec;
pub mod gradcheck;
mod graph;
mod ops;
mod scalar;
mod sparse;
mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use error::{DiffError, Result};
pub use exec::{map_indexed, Exec};
pub use graph::{DiffTensor, Graph, Var};
pub use ops::{ConvGeometry, CustomOp, LAYER_NORM_EPS};
pub use scalar::Scalar;
pub use sparse::SparseMatrix;
pub use tensor::Tensor;
