//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a tape of eagerly evaluated nodes. Backward rules are
//! emitted as ordinary ops on the same tape, so a gradient obtained with
//! [`Graph::grad_graph`] can be differentiated again. This is what the
//! influence gradient needs: the derivative with respect to the input of a
//! dot product between a fixed vector and a parameter gradient.

mod check;
mod graph;
mod params;
mod program;
mod tensor;

pub use check::{central_difference, finite_diff_check};
pub use graph::{Graph, Var};
pub use params::{ParamEntry, ParamVector};
pub use program::{Instr, Program};
pub use tensor::Tensor;

pub(crate) use graph::{sigmoid, softmax_in_place};
pub(crate) use tensor::matmul_raw;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("{op}: numeric overflow (non-finite value)")]
    NonFinite { op: &'static str },
    #[error("gradient root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("node {node} does not require gradients")]
    NotDifferentiable { node: usize },
    #[error("function is not finite at probe coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("parameter layout: {0}")]
    Layout(String),
}
