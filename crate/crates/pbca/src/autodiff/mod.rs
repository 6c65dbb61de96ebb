//! Minimal reverse-mode differentiation core.
//!
//! Supplies exactly the tensor operations the forecaster needs, in f64, with
//! deterministic evaluation order and gradient accumulation.

mod graph;
mod tensor;

pub use graph::{
    finite_diff_check, sigmoid, Bindings, Evaluation, Gradients, Graph, Node, NodeId, Op,
};
pub use tensor::Tensor;
