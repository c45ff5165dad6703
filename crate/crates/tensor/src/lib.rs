//! Dense row-major `f64` tensors and a tape-style reverse-mode
//! differentiation graph, sized for attention networks at desk scale.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles.
//! Calling [`Graph::backward`] on a scalar node walks the tape once in
//! reverse and returns the gradient of every node that depends on a
//! gradient-requiring leaf.

mod error;
mod graph;
pub mod numeric;
mod shape;
mod tensor;

pub use error::TensorError;
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
