//! Differentiable operators, implemented as methods on [`Tape`](crate::Tape).

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod shape;

pub use elementwise::{broadcast_shape, gelu_grad_scalar, gelu_scalar};
pub(crate) use norm::softmax_rows;
