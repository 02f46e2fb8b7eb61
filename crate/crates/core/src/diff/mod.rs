//! A small reverse-mode automatic differentiation engine over dense `f64`
//! tensors, with support for differentiating through gradients.
//!
//! Graphs are built eagerly: every operation on a [`Var`] computes its value
//! immediately and records its parents. [`backward`] walks the recorded
//! graph in reverse id order. Passing `create_graph = true` records the
//! backward computation itself, so the returned gradients are ordinary
//! differentiable nodes.
//!
//! Broadcasting is limited to scalar-vs-tensor. Graph construction is
//! single-threaded (`Var` is `!Send`); independent graphs may live on
//! different threads.

mod backward;
mod fd;
mod tensor;
mod var;

pub use backward::{backward, backward_with, BackwardOptions};
pub use fd::{finite_difference, max_relative_error};
pub use tensor::Tensor;
pub use var::{grad_enabled, no_grad, with_grad_mode, UnaryPrimitive, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{len} values do not fill shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("slice {start}..{end} on axis {axis} out of range for shape {shape:?}")]
    InvalidSlice {
        axis: usize,
        start: usize,
        end: usize,
        shape: Vec<usize>,
    },
    #[error("{perm:?} is not a permutation of the axes of {shape:?}")]
    InvalidPermutation { perm: Vec<usize>, shape: Vec<usize> },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("backward root must hold a single value, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("graph was released by an earlier backward pass; retain it to differentiate again")]
    GraphReleased,
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("function value is not finite when perturbing coordinate {index}")]
    NonFinite { index: usize },
}
