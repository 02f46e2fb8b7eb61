//! Dense row-major `f64` tensors.

use std::sync::Arc;

use super::DiffError;

/// A dense, row-major tensor of doubles. Shape `[]` is a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    /// Shared so reshapes and clones do not copy; writes go through
    /// copy-on-write.
    data: Arc<Vec<f64>>,
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
/// A permutation of three axes; output axis `d` is input axis `p[d]`.
pub(crate) type Perm3 = [usize; 3];

pub(crate) fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DiffError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: Arc::new(vec![value]),
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; shape.iter().product()]),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DiffError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(DiffError::LengthMismatch {
                    shape: vec![rows.len(), cols],
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_data(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Element at a 2-D index.
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub(crate) fn reshaped(&self, shape: &[usize]) -> Result<Self, DiffError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(DiffError::LengthMismatch {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Elementwise combination with scalar broadcast on either side.
    pub(crate) fn zip_broadcast(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, DiffError> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect();
            Ok(Self {
                shape: self.shape.clone(),
                data: Arc::new(data),
            })
        } else if other.is_scalar() {
            let b = other.data[0];
            Ok(self.map(|a| f(a, b)))
        } else if self.is_scalar() {
            let a = self.data[0];
            Ok(other.map(|b| f(a, b)))
        } else {
            Err(DiffError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            })
        }
    }

    #[cfg(test)]
    pub(crate) fn matmul(&self, other: &Tensor) -> Result<Self, DiffError> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) @ op(other)` where `op` transposes when the flag is set.
    /// Transposition is handled through strides, without copying.
    pub(crate) fn matmul_t(&self, other: &Tensor, trans_a: bool, trans_b: bool) -> Result<Self, DiffError> {
        let mismatch = || DiffError::ShapeMismatch {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.shape.len() != 2 || other.shape.len() != 2 {
            return Err(mismatch());
        }
        let (ar, ac) = (self.shape[0], self.shape[1]);
        let (br, bc) = (other.shape[0], other.shape[1]);
        let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(mismatch());
        }
        // row and column strides of op(A) and op(B) over the row-major buffers
        let (rsa, csa) = if trans_a { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
        if m == 0 || n == 0 || k == 0 {
            return Ok(Self::zeros(&[m, n]));
        }
        let mut out: Vec<f64> = Vec::with_capacity(m * n);
        // SAFETY: the buffers hold exactly ar*ac, br*bc and m*n elements, and the
        // strides address op(A) as m x k, op(B) as k x n and C as m x n inside them.
        // With beta = 0 dgemm writes every element of C without reading it, so
        // the length can be set afterwards.
        unsafe {
            gemm(m, k, n, self.data.as_ptr(), (rsa, csa), other.data.as_ptr(), (rsb, csb), out.as_mut_ptr());
            out.set_len(m * n);
        }
        Ok(Self {
            shape: vec![m, n],
            data: Arc::new(out),
        })
    }

    /// Batched matrix product on permuted views, with a permuted result:
    /// `permute(permute(self, pa) @ permute(other, pb), pc)`, where the
    /// inner product multiplies `[B, m, k]` by `[B, k, n]` batch by batch.
    /// No permuted copy is materialized; the views are strided reads and
    /// writes.
    pub(crate) fn bmm_permuted(&self, pa: Perm3, other: &Tensor, pb: Perm3, pc: Perm3) -> Result<Self, DiffError> {
        let mismatch = || DiffError::ShapeMismatch {
            op: "bmm",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.shape.len() != 3 || other.shape.len() != 3 {
            return Err(mismatch());
        }
        for p in [pa, pb, pc] {
            let mut sorted = p;
            sorted.sort_unstable();
            if sorted != [0, 1, 2] {
                return Err(DiffError::InvalidPermutation {
                    perm: p.to_vec(),
                    shape: self.shape.clone(),
                });
            }
        }
        let strides = |shape: &[usize]| [(shape[1] * shape[2]) as isize, shape[2] as isize, 1];
        let (sa, sb) = (strides(&self.shape), strides(&other.shape));
        // shapes and strides of the logical operands
        let va = pa.map(|d| (self.shape[d], sa[d]));
        let vb = pb.map(|d| (other.shape[d], sb[d]));
        let (batch, m, k) = (va[0].0, va[1].0, va[2].0);
        let n = vb[2].0;
        if vb[0].0 != batch || vb[1].0 != k {
            return Err(mismatch());
        }
        let logical = [batch, m, n];
        let shape: Vec<usize> = pc.iter().map(|&e| logical[e]).collect();
        let so = strides(&shape);
        let mut sc = [0isize; 3];
        for (d, &e) in pc.iter().enumerate() {
            sc[e] = so[d];
        }
        let numel = batch * m * n;
        if numel == 0 || k == 0 {
            return Ok(Self::zeros(&shape));
        }
        let mut out: Vec<f64> = Vec::with_capacity(numel);
        // SAFETY: every view stays inside its buffer: offsets are sums of
        // index * stride over in-range indices of the tensor's own shape. The
        // output views of distinct batches are disjoint and together cover all
        // `numel` elements, each written once by dgemm with beta = 0.
        unsafe {
            for t in 0..batch {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    self.data.as_ptr().offset(t as isize * va[0].1),
                    va[1].1,
                    va[2].1,
                    other.data.as_ptr().offset(t as isize * vb[0].1),
                    vb[1].1,
                    vb[2].1,
                    0.0,
                    out.as_mut_ptr().offset(t as isize * sc[0]),
                    sc[1],
                    sc[2],
                );
            }
            out.set_len(numel);
        }
        Ok(Self {
            shape,
            data: Arc::new(out),
        })
    }

    /// Reorders axes: output axis `d` is input axis `perm[d]`.
    pub(crate) fn permute(&self, perm: &[usize]) -> Result<Self, DiffError> {
        let rank = self.shape.len();
        let mut seen = vec![false; rank];
        let valid = perm.len() == rank && perm.iter().all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(DiffError::InvalidPermutation {
                perm: perm.to_vec(),
                shape: self.shape.clone(),
            });
        }
        let shape: Vec<usize> = perm.iter().map(|&a| self.shape[a]).collect();
        let numel = self.data.len();
        if numel == 0 || rank == 0 {
            return Ok(Self {
                shape,
                data: self.data.clone(),
            });
        }
        let mut in_strides = vec![1usize; rank];
        for d in (0..rank - 1).rev() {
            in_strides[d] = in_strides[d + 1] * self.shape[d + 1];
        }
        let strides: Vec<usize> = perm.iter().map(|&a| in_strides[a]).collect();
        let (inner_len, inner_stride) = (shape[rank - 1], strides[rank - 1]);
        let mut data = Vec::with_capacity(numel);
        let mut index = vec![0usize; rank];
        let mut base = 0usize;
        loop {
            if inner_stride == 1 {
                data.extend_from_slice(&self.data[base..base + inner_len]);
            } else {
                data.extend((0..inner_len).map(|t| self.data[base + t * inner_stride]));
            }
            // advance the odometer over all but the last output axis
            let mut d = rank - 1;
            loop {
                if d == 0 {
                    return Ok(Self { shape, data: Arc::new(data) });
                }
                d -= 1;
                index[d] += 1;
                base += strides[d];
                if index[d] < shape[d] {
                    break;
                }
                base -= strides[d] * shape[d];
                index[d] = 0;
            }
        }
    }

    pub(crate) fn group_dot(&self, other: &Tensor, group: usize) -> Result<Self, DiffError> {
        let bad = group == 0 || self.shape != other.shape || self.shape.last().is_none_or(|&n| n % group != 0);
        if bad {
            return Err(DiffError::ShapeMismatch {
                op: "group_dot",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data = self
            .data
            .chunks_exact(group)
            .zip(other.data.chunks_exact(group))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect();
        let mut shape = self.shape.clone();
        *shape.last_mut().expect("checked non-scalar") /= group;
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub(crate) fn group_scale(&self, other: &Tensor, group: usize) -> Result<Self, DiffError> {
        let rank_ok = self.shape.len() == other.shape.len() && !self.shape.is_empty();
        let lead_ok = rank_ok && self.shape[..self.shape.len() - 1] == other.shape[..other.shape.len() - 1];
        if group == 0 || !lead_ok || self.shape.last().map(|n| n * group) != other.shape.last().copied() {
            return Err(DiffError::ShapeMismatch {
                op: "group_scale",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(other.data.len());
        for (&s, run) in self.data.iter().zip(other.data.chunks_exact(group)) {
            data.extend(run.iter().map(|v| s * v));
        }
        Ok(Self {
            shape: other.shape.clone(),
            data: Arc::new(data),
        })
    }

    pub(crate) fn transpose2(&self) -> Result<Self, DiffError> {
        if self.shape.len() != 2 {
            return Err(DiffError::RankMismatch {
                op: "transpose",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: Arc::new(data),
        })
    }

    fn check_axis(&self, op: &'static str, axis: usize) -> Result<(), DiffError> {
        if axis >= self.shape.len() {
            return Err(DiffError::AxisOutOfRange {
                op,
                axis,
                shape: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Sums out `axis`, removing it from the shape.
    pub(crate) fn sum_axis(&self, axis: usize) -> Result<Self, DiffError> {
        self.check_axis("sum_axis", axis)?;
        let (outer, len, inner) = split_at_axis(&self.shape, axis);
        if inner == 1 {
            let data = self.data.chunks_exact(len.max(1)).map(|c| c.iter().sum()).collect();
            let mut shape = self.shape.clone();
            shape.remove(axis);
            return Ok(Self { shape, data: Arc::new(data) });
        }
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut data[o * inner..(o + 1) * inner];
            for a in 0..len {
                let base = (o * len + a) * inner;
                for (d, &s) in dst.iter_mut().zip(&self.data[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self { shape, data: Arc::new(data) })
    }

    /// Inserts a new axis of length `len` at `axis`, repeating values along it.
    pub(crate) fn expand_axis(&self, axis: usize, len: usize) -> Result<Self, DiffError> {
        if axis > self.shape.len() {
            return Err(DiffError::AxisOutOfRange {
                op: "expand",
                axis,
                shape: self.shape.clone(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        if inner == 1 {
            for &v in self.data.iter() {
                data.extend(std::iter::repeat_n(v, len));
            }
            let mut shape = self.shape.clone();
            shape.insert(axis, len);
            return Ok(Self { shape, data: Arc::new(data) });
        }
        for o in 0..outer {
            let src = &self.data[o * inner..(o + 1) * inner];
            for _ in 0..len {
                data.extend_from_slice(src);
            }
        }
        let mut shape = self.shape.clone();
        shape.insert(axis, len);
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub(crate) fn slice_axis(&self, axis: usize, start: usize, end: usize) -> Result<Self, DiffError> {
        self.check_axis("slice", axis)?;
        if start > end || end > self.shape[axis] {
            return Err(DiffError::InvalidSlice {
                axis,
                start,
                end,
                shape: self.shape.clone(),
            });
        }
        let (outer, len, inner) = split_at_axis(&self.shape, axis);
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&self.data[base..base + width * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = width;
        Ok(Self { shape, data: Arc::new(data) })
    }

    /// Zero-pads along `axis` with `before` and `after` slots.
    pub(crate) fn pad_axis(&self, axis: usize, before: usize, after: usize) -> Result<Self, DiffError> {
        self.check_axis("pad", axis)?;
        let (outer, len, inner) = split_at_axis(&self.shape, axis);
        let total = before + len + after;
        let mut data = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let src = &self.data[o * len * inner..(o + 1) * len * inner];
            let dst = (o * total + before) * inner;
            data[dst..dst + len * inner].copy_from_slice(src);
        }
        let mut shape = self.shape.clone();
        shape[axis] = total;
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Self, DiffError> {
        let first = parts.first().ok_or(DiffError::EmptyConcat)?;
        first.check_axis("concat", axis)?;
        for p in &parts[1..] {
            let compatible = p.shape.len() == first.shape.len()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let (outer, _, inner) = split_at_axis(&first.shape, axis);
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let w = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Self { shape, data: Arc::new(data) })
    }
}

/// `C = A B` for an `m x k` by `k x n` product, C row-major and contiguous.
///
/// # Safety
/// The pointers with their (row, column) strides must address valid
/// `m x k`, `k x n` and `m x n` regions.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: *const f64,
    (rsa, csa): (isize, isize),
    b: *const f64,
    (rsb, csb): (isize, isize),
    c: *mut f64,
) {
    matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, 0.0, c, n as isize, 1);
}
