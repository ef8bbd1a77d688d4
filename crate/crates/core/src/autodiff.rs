//! Tape-based reverse-mode automatic differentiation.
//!
//! Operations are recorded on a [`Tape`] as they execute. Each recorded node
//! keeps its forward value and whatever the backward rule needs, so
//! [`Tape::backward`] is a single reverse sweep over the node list. Node
//! inputs always have lower indices than the node itself, which makes the
//! recording order a topological order.
//!
//! ```
//! use ffvt::autodiff::Tape;
//! use ffvt::tensor::Tensor;
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::scalar(3.0).unwrap());
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).item().unwrap(), 6.0);
//! ```
//!
//! Gradients add across fan-out. A tape supports exactly one backward pass;
//! recording further ops or calling `backward` again is a usage error.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::tensor::ops::{self, matmul_nt_acc, matmul_tn_acc};
use crate::tensor::{Scalar, Tensor};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a particular tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Deliberate backward-rule corruption, used to prove the gradient checker
/// notices broken rules.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Fault {
    FlipMatmulBackward,
}

enum Op<T> {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    Softmax(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<T>, inv_std: Vec<T> },
    Gelu(usize),
    CrossEntropy { logits: usize, label: usize, probs: Vec<T> },
    Reshape(usize),
    GatherRows(usize, Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    Sum(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
    finished: bool,
    fault: Option<Fault>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), finished: false, fault: None }
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Option<Fault>) -> Self {
        Tape { fault, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        assert_eq!(v.tape, self.id, "Var used on a foreign tape");
        &self.nodes[v.index].value
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::Usage("Var belongs to a different tape".into()));
        }
        Ok(v.index)
    }

    fn push(&mut self, name: &str, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Result<Var> {
        if self.finished {
            return Err(Error::Usage(format!("cannot record {name} after backward; start a new tape")));
        }
        value.check_finite(name)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var { tape: self.id, index: self.nodes.len() - 1 })
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = ops::matmul(self.val(ia), self.val(ib))?;
        self.push("matmul", out, Op::Matmul(ia, ib), &[ia, ib])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = ops::transpose(self.val(ia))?;
        self.push("transpose", out, Op::Transpose(ia), &[ia])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = ops::add(self.val(ia), self.val(ib))?;
        self.push("add", out, Op::Add(ia, ib), &[ia, ib])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = ops::mul(self.val(ia), self.val(ib))?;
        self.push("mul", out, Op::Mul(ia, ib), &[ia, ib])
    }

    /// Adds `bias` to every vector along the last axis of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(bias)?);
        let out = ops::add_row(self.val(ia), self.val(ib))?;
        self.push("add_row", out, Op::AddRow(ia, ib), &[ia, ib])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = ops::scale(self.val(ia), s);
        self.push("scale", out, Op::Scale(ia, s), &[ia])
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = ops::softmax(self.val(ia))?;
        self.push("softmax", out, Op::Softmax(ia), &[ia])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (ix, ig, ib) = (self.idx(x)?, self.idx(gamma)?, self.idx(beta)?);
        let r = ops::layer_norm_full(self.val(ix), self.val(ig), self.val(ib), eps)?;
        let op = Op::LayerNorm { x: ix, gamma: ig, beta: ib, xhat: r.xhat, inv_std: r.inv_std };
        self.push("layer_norm", r.out, op, &[ix, ig, ib])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = ops::gelu(self.val(ia))?;
        self.push("gelu", out, Op::Gelu(ia), &[ia])
    }

    /// Scalar `-log softmax(logits)[label]`, treating `logits` as flat.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let il = self.idx(logits)?;
        let (loss, probs) = ops::cross_entropy(self.val(il), label)?;
        let out = Tensor::from_parts(Vec::new(), vec![loss]);
        self.push("cross_entropy", out, Op::CrossEntropy { logits: il, label, probs }, &[il])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).reshape(shape.to_vec())?;
        self.push("reshape", out, Op::Reshape(ia), &[ia])
    }

    /// Copies the listed rows of a matrix, in order. Repeats are allowed.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let src = self.val(ia);
        let (m, n) = src.dims2()?;
        if rows.is_empty() {
            return Err(Error::dim("gather_rows with no rows"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Index(format!("row {bad} out of range for {m} rows")));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(src.row(r));
        }
        let out = Tensor::from_parts(vec![rows.len(), n], data);
        self.push("gather_rows", out, Op::GatherRows(ia, rows.to_vec()), &[ia])
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect::<Result<_>>()?;
        let first = idx.first().ok_or_else(|| Error::dim("concat_rows of nothing"))?;
        let (_, n) = self.val(*first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &i in &idx {
            let (m, ni) = self.val(i).dims2()?;
            if ni != n {
                return Err(Error::dim(format!("concat_rows: {ni} columns vs {n}")));
            }
            rows += m;
            data.extend_from_slice(self.val(i).data());
        }
        let out = Tensor::from_parts(vec![rows, n], data);
        self.push("concat_rows", out, Op::ConcatRows(idx.clone()), &idx)
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let src = self.val(ia);
        let (m, n) = src.dims2()?;
        if len == 0 || start + len > n {
            return Err(Error::dim(format!("slice_cols {start}..{} of {n} columns", start + len)));
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let out = Tensor::from_parts(vec![m, len], data);
        self.push("slice_cols", out, Op::SliceCols { x: ia, start }, &[ia])
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect::<Result<_>>()?;
        let first = idx.first().ok_or_else(|| Error::dim("concat_cols of nothing"))?;
        let (m, _) = self.val(*first).dims2()?;
        let mut widths = Vec::with_capacity(idx.len());
        for &i in &idx {
            let (mi, ni) = self.val(i).dims2()?;
            if mi != m {
                return Err(Error::dim(format!("concat_cols: {mi} rows vs {m}")));
            }
            widths.push(ni);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &i in &idx {
                data.extend_from_slice(self.val(i).row(r));
            }
        }
        let out = Tensor::from_parts(vec![m, total], data);
        self.push("concat_cols", out, Op::ConcatCols(idx.clone()), &idx)
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let s: T = self.val(ia).data().iter().copied().sum();
        self.push("sum", Tensor::from_parts(Vec::new(), vec![s]), Op::Sum(ia), &[ia])
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        let il = self.idx(loss)?;
        if self.finished {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        if self.nodes[il].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[il].value.shape()
            )));
        }
        self.finished = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[il] = Some(vec![T::one()]);
        let flip = self.fault == Some(Fault::FlipMatmulBackward);

        for i in (0..=il).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_deref() else { continue };
            let nodes = &self.nodes;
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (m, k) = nodes[*a].value.dims2()?;
                    let n = nodes[*b].value.shape()[1];
                    let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
                    if let Some(da) = slot(lower, nodes, *a) {
                        if flip {
                            let mut tmp = vec![T::zero(); m * k];
                            matmul_nt_acc(g, bv, &mut tmp, m, n, k);
                            da.iter_mut().zip(tmp).for_each(|(d, t)| *d = *d - t);
                        } else {
                            matmul_nt_acc(g, bv, da, m, n, k);
                        }
                    }
                    if let Some(db) = slot(lower, nodes, *b) {
                        if flip {
                            let mut tmp = vec![T::zero(); k * n];
                            matmul_tn_acc(av, g, &mut tmp, m, k, n);
                            db.iter_mut().zip(tmp).for_each(|(d, t)| *d = *d - t);
                        } else {
                            matmul_tn_acc(av, g, db, m, k, n);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = nodes[*a].value.dims2()?;
                    if let Some(da) = slot(lower, nodes, *a) {
                        for r in 0..m {
                            for col in 0..n {
                                da[r * n + col] = da[r * n + col] + g[col * m + r];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for j in [*a, *b] {
                        if let Some(d) = slot(lower, nodes, j) {
                            d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
                    if let Some(da) = slot(lower, nodes, *a) {
                        for ((d, &g), &y) in da.iter_mut().zip(g).zip(bv) {
                            *d = *d + g * y;
                        }
                    }
                    if let Some(db) = slot(lower, nodes, *b) {
                        for ((d, &g), &x) in db.iter_mut().zip(g).zip(av) {
                            *d = *d + g * x;
                        }
                    }
                }
                Op::AddRow(a, bias) => {
                    if let Some(da) = slot(lower, nodes, *a) {
                        da.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                    }
                    let n = nodes[*bias].value.numel();
                    if let Some(db) = slot(lower, nodes, *bias) {
                        for row in g.chunks(n) {
                            db.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if let Some(da) = slot(lower, nodes, *a) {
                        da.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + *s * g);
                    }
                }
                Op::Softmax(a) => {
                    let (_, n) = node.value.last_axis();
                    let y = node.value.data();
                    if let Some(da) = slot(lower, nodes, *a) {
                        for ((d, gr), yr) in da.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                            let dot: T = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum();
                            for ((d, &g), &y) in d.iter_mut().zip(gr).zip(yr) {
                                *d = *d + y * (g - dot);
                            }
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let dim = nodes[*gamma].value.numel();
                    let gam = nodes[*gamma].value.data();
                    if let Some(dg) = slot(lower, nodes, *gamma) {
                        for (gr, hr) in g.chunks(dim).zip(xhat.chunks(dim)) {
                            for ((d, &g), &h) in dg.iter_mut().zip(gr).zip(hr) {
                                *d = *d + g * h;
                            }
                        }
                    }
                    if let Some(db) = slot(lower, nodes, *beta) {
                        for gr in g.chunks(dim) {
                            db.iter_mut().zip(gr).for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                    if let Some(dx) = slot(lower, nodes, *x) {
                        let dn = T::from_usize(dim).unwrap();
                        for (r, ((dr, gr), hr)) in
                            dx.chunks_mut(dim).zip(g.chunks(dim)).zip(xhat.chunks(dim)).enumerate()
                        {
                            let dh: Vec<T> = gr.iter().zip(gam).map(|(&g, &w)| g * w).collect();
                            let mean_dh = dh.iter().copied().sum::<T>() / dn;
                            let mean_dh_h = dh.iter().zip(hr).map(|(&a, &b)| a * b).sum::<T>() / dn;
                            for ((d, &dhj), &hj) in dr.iter_mut().zip(&dh).zip(hr) {
                                *d = *d + inv_std[r] * (dhj - mean_dh - hj * mean_dh_h);
                            }
                        }
                    }
                }
                Op::Gelu(a) => {
                    let xv = nodes[*a].value.data();
                    if let Some(da) = slot(lower, nodes, *a) {
                        for ((d, &g), &x) in da.iter_mut().zip(g).zip(xv) {
                            *d = *d + g * ops::gelu_grad_scalar(x);
                        }
                    }
                }
                Op::CrossEntropy { logits, label, probs } => {
                    if let Some(dl) = slot(lower, nodes, *logits) {
                        for (j, (d, &p)) in dl.iter_mut().zip(probs).enumerate() {
                            let target = if j == *label { T::one() } else { T::zero() };
                            *d = *d + g[0] * (p - target);
                        }
                    }
                }
                Op::Reshape(a) => {
                    if let Some(da) = slot(lower, nodes, *a) {
                        da.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g);
                    }
                }
                Op::GatherRows(a, rows) => {
                    let n = nodes[*a].value.shape()[1];
                    if let Some(da) = slot(lower, nodes, *a) {
                        for (r, &src) in rows.iter().enumerate() {
                            let dst = &mut da[src * n..(src + 1) * n];
                            dst.iter_mut().zip(&g[r * n..(r + 1) * n]).for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &j in parts {
                        let len = nodes[j].value.numel();
                        if let Some(dj) = slot(lower, nodes, j) {
                            dj.iter_mut().zip(&g[offset..offset + len]).for_each(|(d, &g)| *d = *d + g);
                        }
                        offset += len;
                    }
                }
                Op::SliceCols { x, start } => {
                    let (m, n) = nodes[*x].value.dims2()?;
                    let len = node.value.shape()[1];
                    if let Some(dx) = slot(lower, nodes, *x) {
                        for r in 0..m {
                            let dst = &mut dx[r * n + start..r * n + start + len];
                            dst.iter_mut().zip(&g[r * len..(r + 1) * len]).for_each(|(d, &g)| *d = *d + g);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.shape()[1];
                    let m = node.value.shape()[0];
                    let mut col = 0;
                    for &j in parts {
                        let w = nodes[j].value.shape()[1];
                        if let Some(dj) = slot(lower, nodes, j) {
                            for r in 0..m {
                                let src = &g[r * total + col..r * total + col + w];
                                dj[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(d, &g)| *d = *d + g);
                            }
                        }
                        col += w;
                    }
                }
                Op::Sum(a) => {
                    if let Some(da) = slot(lower, nodes, *a) {
                        da.iter_mut().for_each(|d| *d = *d + g[0]);
                    }
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { tape: self.id, grads, shapes })
    }
}

fn slot<'a, T: Scalar>(lower: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], j: usize) -> Option<&'a mut Vec<T>> {
    if !nodes[j].requires_grad {
        return None;
    }
    Some(lower[j].get_or_insert_with(|| vec![T::zero(); nodes[j].value.numel()]))
}

/// Result of a backward pass: `d loss / d var` for every recorded value.
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`; zeros when `v` does not influence the loss or does not
    /// require a gradient.
    pub fn get(&self, v: Var) -> Tensor<T> {
        assert_eq!(v.tape, self.tape, "Var from a different tape");
        let shape = self.shapes[v.index].clone();
        match &self.grads[v.index] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(shape),
        }
    }

    pub(crate) fn take_raw(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.index].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0f64).unwrap());
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item().unwrap(), 6.0);
    }

    #[test]
    fn sum_of_softmax_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[4], &[0.3, -1.0, 2.0, 0.5]));
        let s = tape.softmax(x).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap().get(x);
        assert!(g.data().iter().all(|v| v.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn unreachable_params_get_zero() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let unused = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let l = tape.sum(x).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros([3]));
        assert_eq!(g.get(x).data(), &[1.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, -2.0]));
        let a = tape.add(x, x).unwrap();
        let b = tape.add(a, x).unwrap();
        let l = tape.sum(b).unwrap();
        assert_eq!(tape.backward(l).unwrap().get(x).data(), &[3.0, 3.0]);
    }

    #[test]
    fn backward_is_single_use() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let l = tape.sum(x).unwrap();
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::Usage(_))));
        assert!(matches!(tape.sum(x), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut a = Tape::<f64>::new();
        let mut b = Tape::<f64>::new();
        let x = a.param(t(&[1], &[1.0]));
        assert!(matches!(b.sum(x), Err(Error::Usage(_))));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let l = tape.cross_entropy(x, 1).unwrap();
        let g = tape.backward(l).unwrap().get(x);
        let p = ops::softmax(&t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let expect = [p.data()[0], p.data()[1] - 1.0, p.data()[2]];
        for (a, b) in g.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_forward_is_a_numeric_error() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[1e200]));
        let y = tape.mul(x, x).unwrap_err();
        assert!(matches!(y, Error::Numeric(_)));
    }

    #[test]
    fn gather_and_concat_route_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let g = tape.gather_rows(x, &[2, 0, 2]).unwrap();
        let s = tape.slice_cols(g, 1, 1).unwrap();
        let l = tape.sum(s).unwrap();
        let grad = tape.backward(l).unwrap().get(x);
        assert_eq!(grad.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
    }
}
