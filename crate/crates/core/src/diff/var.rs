//! Graph nodes and the primitive operation set.
//!
//! Every node records the operation that produced it together with its
//! parents. Node ids are drawn from a monotone counter, so parents always
//! carry smaller ids than their consumers; sorting reachable nodes by
//! descending id is a valid reverse topological order.

use std::cell::Cell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{Perm3, Tensor};
use super::DiffError;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Whether newly created nodes record their producing operation.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Runs `f` with graph recording switched to `enabled`, restoring the
/// previous mode afterwards.
pub fn with_grad_mode<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(enabled)));
    f()
}

/// Runs `f` without recording any operations.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    with_grad_mode(false, f)
}

/// A user-supplied unary primitive.
///
/// `backward` must be written in terms of [`Var`] operations (possibly
/// including further custom primitives) so that its result is itself
/// differentiable.
pub trait UnaryPrimitive {
    fn name(&self) -> &'static str;
    fn forward(&self, input: &Tensor) -> Result<Tensor, DiffError>;
    fn backward(&self, input: &Var, output: &Var, grad: &Var) -> Result<Var, DiffError>;
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// `op(a) @ op(b)`, with the flags selecting transposition.
    MatMul(Var, Var, bool, bool),
    /// `permute(permute(a, pa) @ permute(b, pb), pc)`, batched over the
    /// leading axis of the permuted operands.
    Bmm(Var, Var, Perm3, Perm3, Perm3),
    Permute(Var, Vec<usize>),
    Transpose(Var),
    Reshape(Var),
    SumAll(Var),
    SumAxis(Var, usize),
    Expand(Var, usize),
    Abs(Var),
    Square(Var),
    Sigmoid(Var),
    Exp(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize, usize),
    Pad(Var, usize, usize),
    GroupDot(Var, Var, usize),
    GroupScale(Var, Var, usize),
    Custom(Var, Rc<dyn UnaryPrimitive>),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b, ..)
            | Op::Bmm(a, b, ..)
            | Op::GroupDot(a, b, _)
            | Op::GroupScale(a, b, _) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::Permute(a, _)
            | Op::Reshape(a)
            | Op::SumAll(a)
            | Op::SumAxis(a, _)
            | Op::Expand(a, _)
            | Op::Abs(a)
            | Op::Square(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Slice(a, _, _, _)
            | Op::Pad(a, _, _)
            | Op::Custom(a, _) => vec![a],
            Op::Concat(parts, _) => parts.iter().collect(),
        }
    }

    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Bmm(..) => "bmm",
            Op::Permute(..) => "permute",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SumAll(..) => "sum",
            Op::SumAxis(..) => "sum_axis",
            Op::Expand(..) => "expand",
            Op::Abs(..) => "abs",
            Op::Square(..) => "square",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Pad(..) => "pad",
            Op::GroupDot(..) => "group_dot",
            Op::GroupScale(..) => "group_scale",
            Op::Custom(_, p) => p.name(),
        }
    }
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    pub(crate) released: Cell<bool>,
}

/// A differentiable value: a tensor plus the operation that produced it.
#[derive(Clone)]
pub struct Var(pub(crate) Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("op", &self.0.op.name())
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn from_parts(value: Tensor, op: Op, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            op,
            requires_grad,
            released: Cell::new(false),
        }))
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(value: Tensor) -> Self {
        Self::from_parts(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(value: Tensor) -> Self {
        Self::from_parts(value, Op::Leaf, false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(Tensor::scalar(value))
    }

    fn record(value: Tensor, op: Op) -> Self {
        let requires_grad = grad_enabled() && op.parents().iter().any(|p| p.requires_grad());
        if requires_grad {
            Self::from_parts(value, op, true)
        } else {
            Self::from_parts(value, Op::Leaf, false)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.0.op, Op::Leaf)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// The value of a one-element node.
    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    /// A constant copy of this node's value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn add(&self, other: &Var) -> Result<Var, DiffError> {
        let v = self.value().zip_broadcast(other.value(), "add", |a, b| a + b)?;
        Ok(Self::record(v, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Var) -> Result<Var, DiffError> {
        let v = self.value().zip_broadcast(other.value(), "sub", |a, b| a - b)?;
        Ok(Self::record(v, Op::Sub(self.clone(), other.clone())))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var, DiffError> {
        let v = self.value().zip_broadcast(other.value(), "mul", |a, b| a * b)?;
        Ok(Self::record(v, Op::Mul(self.clone(), other.clone())))
    }

    /// Products of `self` and `other` (same shape, last axis a multiple of
    /// `group`) summed over consecutive runs of `group` entries of the last
    /// axis: `[..., m * group] -> [..., m]`.
    pub fn group_dot(&self, other: &Var, group: usize) -> Result<Var, DiffError> {
        let v = self.value().group_dot(other.value(), group)?;
        Ok(Self::record(v, Op::GroupDot(self.clone(), other.clone(), group)))
    }

    /// Each entry of `self` (`[..., m]`) scales its run of `group` entries
    /// of `other` (`[..., m * group]`).
    pub fn group_scale(&self, other: &Var, group: usize) -> Result<Var, DiffError> {
        let v = self.value().group_scale(other.value(), group)?;
        Ok(Self::record(v, Op::GroupScale(self.clone(), other.clone(), group)))
    }

    pub fn scale(&self, factor: f64) -> Var {
        Self::record(self.value().map(|a| a * factor), Op::Scale(self.clone(), factor))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        Self::record(self.value().map(|a| a + c), Op::AddScalar(self.clone()))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var, DiffError> {
        self.matmul_t(other, false, false)
    }

    /// Matrix product with either operand optionally transposed.
    pub fn matmul_t(&self, other: &Var, trans_a: bool, trans_b: bool) -> Result<Var, DiffError> {
        let v = self.value().matmul_t(other.value(), trans_a, trans_b)?;
        Ok(Self::record(v, Op::MatMul(self.clone(), other.clone(), trans_a, trans_b)))
    }

    /// Batched matrix product of `[B, m, k]` and `[B, k, n]` nodes, with
    /// either operand optionally transposed in its last two axes.
    pub fn bmm_t(&self, other: &Var, trans_a: bool, trans_b: bool) -> Result<Var, DiffError> {
        let op = |t: bool| if t { [0, 2, 1] } else { [0, 1, 2] };
        self.bmm_permuted(op(trans_a), other, op(trans_b), [0, 1, 2])
    }

    /// `permute(permute(self, pa) @ permute(other, pb), pc)` for 3-D nodes,
    /// where the inner product is batched over the leading axis. The
    /// permutations are strided views, not copies.
    pub fn bmm_permuted(&self, pa: [usize; 3], other: &Var, pb: [usize; 3], pc: [usize; 3]) -> Result<Var, DiffError> {
        let v = self.value().bmm_permuted(pa, other.value(), pb, pc)?;
        Ok(Self::record(v, Op::Bmm(self.clone(), other.clone(), pa, pb, pc)))
    }

    /// Axis reordering; output axis `d` is input axis `perm[d]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Var, DiffError> {
        let v = self.value().permute(perm)?;
        Ok(Self::record(v, Op::Permute(self.clone(), perm.to_vec())))
    }

    /// Transpose of a 2-D node.
    pub fn t(&self) -> Result<Var, DiffError> {
        let v = self.value().transpose2()?;
        Ok(Self::record(v, Op::Transpose(self.clone())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var, DiffError> {
        let v = self.value().reshaped(shape).map_err(|_| DiffError::ShapeMismatch {
            op: "reshape",
            lhs: self.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        Ok(Self::record(v, Op::Reshape(self.clone())))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Var {
        let total = self.value().data().iter().sum();
        Self::record(Tensor::scalar(total), Op::SumAll(self.clone()))
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums out `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Result<Var, DiffError> {
        let v = self.value().sum_axis(axis)?;
        Ok(Self::record(v, Op::SumAxis(self.clone(), axis)))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var, DiffError> {
        let n = self.shape().get(axis).copied().unwrap_or(1).max(1) as f64;
        Ok(self.sum_axis(axis)?.scale(1.0 / n))
    }

    /// Inserts an axis of length `len` at `axis` by repetition.
    pub fn expand(&self, axis: usize, len: usize) -> Result<Var, DiffError> {
        let v = self.value().expand_axis(axis, len)?;
        Ok(Self::record(v, Op::Expand(self.clone(), axis)))
    }

    /// Absolute value; the subgradient at zero is zero.
    pub fn abs(&self) -> Var {
        Self::record(self.value().map(f64::abs), Op::Abs(self.clone()))
    }

    pub fn square(&self) -> Var {
        Self::record(self.value().map(|a| a * a), Op::Square(self.clone()))
    }

    pub fn sigmoid(&self) -> Var {
        Self::record(self.value().map(sigmoid), Op::Sigmoid(self.clone()))
    }

    pub fn exp(&self) -> Var {
        Self::record(self.value().map(f64::exp), Op::Exp(self.clone()))
    }

    /// `x * sigmoid(x)`, composed from primitives.
    pub fn silu(&self) -> Var {
        self.mul(&self.sigmoid()).expect("operands share a shape")
    }

    pub fn concat(parts: &[Var], axis: usize) -> Result<Var, DiffError> {
        let values: Vec<&Tensor> = parts.iter().map(Var::value).collect();
        let v = Tensor::concat(&values, axis)?;
        Ok(Self::record(v, Op::Concat(parts.to_vec(), axis)))
    }

    /// Keeps indices `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var, DiffError> {
        let v = self.value().slice_axis(axis, start, end)?;
        Ok(Self::record(v, Op::Slice(self.clone(), axis, start, end)))
    }

    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Result<Var, DiffError> {
        let v = self.value().pad_axis(axis, before, after)?;
        Ok(Self::record(v, Op::Pad(self.clone(), axis, before)))
    }

    pub fn apply(&self, prim: Rc<dyn UnaryPrimitive>) -> Result<Var, DiffError> {
        let v = prim.forward(self.value())?;
        Ok(Self::record(v, Op::Custom(self.clone(), prim)))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
