//! Reverse-mode gradient computation.
//!
//! Backward rules are written with the same [`Var`] operations used in the
//! forward pass. With `create_graph` set they are recorded like any other
//! computation, which is what makes gradients-of-gradients work.

use std::collections::{HashMap, HashSet};

use super::tensor::{Perm3, Tensor};
use super::var::{with_grad_mode, Op, Var};
use super::DiffError;

/// Controls graph recording and retention for [`backward_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardOptions {
    /// Record the backward computation so the returned gradients can be
    /// differentiated again.
    pub create_graph: bool,
    /// Keep the graph usable for further backward passes. Without it, the
    /// traversed nodes are marked released and a second pass fails with
    /// [`DiffError::GraphReleased`].
    pub retain_graph: bool,
}

/// Gradients of scalar `root` with respect to each of `wrt`.
///
/// Retains the graph exactly when `create_graph` is set.
pub fn backward(root: &Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>, DiffError> {
    backward_with(
        root,
        wrt,
        BackwardOptions {
            create_graph,
            retain_graph: create_graph,
        },
    )
}

pub fn backward_with(root: &Var, wrt: &[Var], opts: BackwardOptions) -> Result<Vec<Var>, DiffError> {
    if root.value().numel() != 1 {
        return Err(DiffError::NonScalarRoot(root.shape().to_vec()));
    }
    let order = reverse_topological(root);
    if order.iter().any(|v| !v.is_leaf() && v.0.released.get()) {
        return Err(DiffError::GraphReleased);
    }

    let targets: HashSet<u64> = wrt.iter().map(Var::id).collect();
    let relevant = relevance(&order, &targets);

    let mut results: HashMap<u64, Var> = HashMap::new();
    with_grad_mode(opts.create_graph, || -> Result<(), DiffError> {
        let mut grads: HashMap<u64, Var> = HashMap::new();
        if root.requires_grad() {
            grads.insert(root.id(), Var::constant(Tensor::ones(root.shape())));
        }
        for node in &order {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            if targets.contains(&node.id()) {
                results.insert(node.id(), g.clone());
            }
            let parents = node.0.op.parents();
            let wanted: Vec<bool> = parents
                .iter()
                .map(|p| relevant.get(&p.id()).copied().unwrap_or(false))
                .collect();
            if !wanted.iter().any(|&w| w) {
                continue;
            }
            let parent_grads = local_grads(node, &g, &wanted)?;
            for (parent, pg) in parents.into_iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                let acc = match grads.remove(&parent.id()) {
                    Some(existing) => existing.add(&pg)?,
                    None => pg,
                };
                grads.insert(parent.id(), acc);
            }
        }
        Ok(())
    })?;

    if !opts.retain_graph {
        for v in order.iter().filter(|v| !v.is_leaf()) {
            v.0.released.set(true);
        }
    }

    Ok(wrt
        .iter()
        .map(|w| {
            results
                .get(&w.id())
                .cloned()
                .unwrap_or_else(|| Var::constant(Tensor::zeros(w.shape())))
        })
        .collect())
}

/// Nodes reachable from `root` through grad-requiring edges, consumers
/// before producers.
fn reverse_topological(root: &Var) -> Vec<Var> {
    let mut seen = HashSet::new();
    let mut stack = vec![root.clone()];
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        for p in v.0.op.parents() {
            if p.requires_grad() && !seen.contains(&p.id()) {
                stack.push(p.clone());
            }
        }
        out.push(v);
    }
    out.sort_unstable_by_key(|v| std::cmp::Reverse(v.id()));
    out
}

/// Marks nodes that lie on a path towards some target.
fn relevance(order: &[Var], targets: &HashSet<u64>) -> HashMap<u64, bool> {
    let mut relevant = HashMap::with_capacity(order.len());
    for node in order.iter().rev() {
        let r = targets.contains(&node.id())
            || node
                .0
                .op
                .parents()
                .iter()
                .any(|p| relevant.get(&p.id()).copied().unwrap_or(false));
        relevant.insert(node.id(), r);
    }
    relevant
}

fn invert3(p: &Perm3) -> Perm3 {
    let mut inv = [0; 3];
    for (d, &a) in p.iter().enumerate() {
        inv[a] = d;
    }
    inv
}

/// Sums a broadcast gradient back down to a scalar operand.
fn unbroadcast(g: Var, operand: &Var) -> Var {
    if operand.value().is_scalar() && !g.value().is_scalar() {
        g.sum()
    } else {
        g
    }
}

fn local_grads(node: &Var, g: &Var, wanted: &[bool]) -> Result<Vec<Option<Var>>, DiffError> {
    let want = |i: usize| wanted[i];
    let out = match &node.0.op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) => vec![
            want(0).then(|| unbroadcast(g.clone(), a)),
            want(1).then(|| unbroadcast(g.clone(), b)),
        ],
        Op::Sub(a, b) => vec![
            want(0).then(|| unbroadcast(g.clone(), a)),
            want(1).then(|| unbroadcast(g.neg(), b)),
        ],
        Op::Mul(a, b) => vec![
            if want(0) { Some(unbroadcast(g.mul(b)?, a)) } else { None },
            if want(1) { Some(unbroadcast(g.mul(a)?, b)) } else { None },
        ],
        Op::Scale(_, f) => vec![Some(g.scale(*f))],
        Op::AddScalar(..) => vec![Some(g.clone())],
        // C = op(A) op(B): dA = g op(B)^T (transposed back when A was), dB likewise
        Op::MatMul(a, b, ta, tb) => vec![
            if want(0) {
                Some(if *ta { b.matmul_t(g, *tb, true)? } else { g.matmul_t(b, false, !*tb)? })
            } else {
                None
            },
            if want(1) {
                Some(if *tb { g.matmul_t(a, true, *ta)? } else { a.matmul_t(g, !*ta, false)? })
            } else {
                None
            },
        ],
        // with A = permute(a, pa), B = permute(b, pb), C = A B, out = permute(C, pc):
        // dC = permute(g, pc^-1), da = permute(dC B^T, pa^-1), db = permute(A^T dC, pb^-1)
        Op::Bmm(a, b, pa, pb, pc) => {
            let swap = |p: &Perm3| [p[0], p[2], p[1]];
            vec![
                if want(0) { Some(g.bmm_permuted(invert3(pc), b, swap(pb), invert3(pa))?) } else { None },
                if want(1) { Some(a.bmm_permuted(swap(pa), g, invert3(pc), invert3(pb))?) } else { None },
            ]
        }
        Op::Permute(_, perm) => {
            let mut inverse = vec![0; perm.len()];
            for (d, &a) in perm.iter().enumerate() {
                inverse[a] = d;
            }
            vec![Some(g.permute(&inverse)?)]
        }
        Op::GroupDot(a, b, group) => vec![
            if want(0) { Some(g.group_scale(b, *group)?) } else { None },
            if want(1) { Some(g.group_scale(a, *group)?) } else { None },
        ],
        Op::GroupScale(s, b, group) => vec![
            if want(0) { Some(g.group_dot(b, *group)?) } else { None },
            if want(1) { Some(s.group_scale(g, *group)?) } else { None },
        ],
        Op::Transpose(_) => vec![Some(g.t()?)],
        Op::Reshape(a) => vec![Some(g.reshape(a.shape())?)],
        Op::SumAll(a) => vec![Some(Var::constant(Tensor::ones(a.shape())).mul(g)?)],
        Op::SumAxis(a, axis) => vec![Some(g.expand(*axis, a.shape()[*axis])?)],
        Op::Expand(_, axis) => vec![Some(g.sum_axis(*axis)?)],
        Op::Abs(a) => {
            let sign = a.value().map(|v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            vec![Some(g.mul(&Var::constant(sign))?)]
        }
        Op::Square(a) => vec![Some(g.mul(a)?.scale(2.0))],
        Op::Sigmoid(_) => {
            let slope = node.mul(&node.neg().add_scalar(1.0))?;
            vec![Some(g.mul(&slope)?)]
        }
        Op::Exp(_) => vec![Some(g.mul(node)?)],
        Op::Concat(parts, axis) => {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(parts.len());
            for (i, p) in parts.iter().enumerate() {
                let len = p.shape()[*axis];
                grads.push(if want(i) {
                    Some(g.slice(*axis, offset, offset + len)?)
                } else {
                    None
                });
                offset += len;
            }
            grads
        }
        Op::Slice(a, axis, start, end) => {
            let len = a.shape()[*axis];
            vec![Some(g.pad(*axis, *start, len - *end)?)]
        }
        Op::Pad(a, axis, before) => {
            let len = a.shape()[*axis];
            vec![Some(g.slice(*axis, *before, *before + len)?)]
        }
        Op::Custom(a, prim) => vec![Some(prim.backward(a, node, g)?)],
    };
    Ok(out)
}
