//! Dense 2-D tensors, their kernels, and reverse-mode differentiation.

mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use gradcheck::{grad_check, DEFAULT_EPS};
pub use graph::{Graph, NodeId};
pub use ops::Activation;
pub use tensor::Tensor;
