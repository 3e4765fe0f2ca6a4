//! Dense fp64 tensors with a reverse-mode gradient tape.

pub mod kernels;
mod ops;
pub mod scalar;
mod tensor;
mod var;

pub use ops::{Binary, Reduce, Unary};
pub use tensor::Tensor;
pub use var::Var;
