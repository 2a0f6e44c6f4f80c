//! Reverse-mode differentiation on a per-forward-pass tape.
//!
//! A [`Tape`] records every operation of one forward computation as a node
//! in evaluation order. [`Tape::backward`] walks the nodes in reverse,
//! propagating adjoints by the chain rule, and deposits parameter
//! gradients back into the [`ParamStore`]. Graphs are rebuilt per forward
//! pass; the networks here are a handful of 64-unit layers, so the
//! bookkeeping cost is negligible next to the matrix products.

use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Const,
    Param(ParamId),
    /// x·w + b with b broadcast across rows.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Matmul { a: NodeId, b: NodeId },
    /// a · bᵀ
    MatmulNT { a: NodeId, b: NodeId },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Neg(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, f64),
    // the added constant is irrelevant to the gradient
    AddScalar(NodeId),
    Square(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    /// Picks x[i, idx[i]] per row, producing n×1.
    GatherCols { x: NodeId, idx: Vec<usize> },
    Minimum(NodeId, NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, len: usize },
}

enum Value {
    Owned(Tensor),
    Shared(Arc<Tensor>),
}

impl Value {
    #[inline]
    fn tensor(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Shared(a) => a,
        }
    }
}

struct Node {
    value: Value,
    op: Op,
}

/// One forward computation's record. Confined to a single logical stream.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.tensor()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value: Value::Owned(value), op });
        id
    }

    /// Insert a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Insert a parameter leaf; `backward` accumulates its gradient into
    /// the store. The value is shared, not copied.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let node = NodeId(self.nodes.len());
        self.nodes.push(Node { value: Value::Shared(store.value_arc(id)), op: Op::Param(id) });
        node
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (n, d_in) = self.value(x).shape();
        let (wi, d_out) = self.value(w).shape();
        assert_eq!(d_in, wi, "affine: input cols must match weight rows");
        assert_eq!(self.value(b).shape(), (1, d_out), "affine: bias must be 1xd_out");
        let mut out = self.value(x).matmul(self.value(w));
        for r in 0..n {
            for c in 0..d_out {
                let v = out.get(r, c) + self.value(b).get(0, c);
                out.set(r, c, v);
            }
        }
        self.push(out, Op::Affine { x, w, b })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::Matmul { a, b })
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).matmul_nt(self.value(b));
        self.push(out, Op::MatmulNT { a, b })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    /// ln(1 + eˣ), evaluated overflow-safe.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(softplus);
        self.push(out, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| -v);
        self.push(out, Op::Neg(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::MulScalar(x, c))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddScalar(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::MeanAll(x))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let out = softmax_rows_value(self.value(x));
        self.push(out, Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut out = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            let row = t.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for c in 0..t.cols() {
                out.set(r, c, t.get(r, c) - log_z);
            }
        }
        self.push(out, Op::LogSoftmaxRows(x))
    }

    /// Per-row column pick: `out[i, 0] = x[i, idx[i]]`.
    pub fn gather_cols(&mut self, x: NodeId, idx: Vec<usize>) -> NodeId {
        let t = self.value(x);
        assert_eq!(idx.len(), t.rows(), "gather: one index per row");
        let mut out = Tensor::zeros(t.rows(), 1);
        for (r, &c) in idx.iter().enumerate() {
            assert!(c < t.cols(), "gather index out of range");
            out.set(r, 0, t.get(r, c));
        }
        self.push(out, Op::GatherCols { x, idx })
    }

    /// Elementwise minimum; ties route the gradient to the first operand.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).zip_map(self.value(b), f64::min);
        self.push(out, Op::Minimum(a, b))
    }

    /// Clamp into [lo, hi]; gradient passes only where the input is interior.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat_cols: row counts must match");
        let mut data = Vec::with_capacity(ta.numel() + tb.numel());
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row_slice(r));
            data.extend_from_slice(tb.row_slice(r));
        }
        let out = Tensor::from_vec(ta.rows(), ta.cols() + tb.cols(), data);
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Stack parts vertically. All parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows: column counts must match");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(rows, cols, data);
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let t = self.value(x);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(t.rows(), len);
        for r in 0..t.rows() {
            out.data_mut()[r * len..(r + 1) * len]
                .copy_from_slice(&t.row_slice(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start, len })
    }

    /// Reverse sweep from a scalar `loss`, accumulating parameter gradients
    /// into `store`. Gradients add onto whatever the store already holds;
    /// zero it between optimization steps.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoints[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let grad = match adjoints[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(pid) => store.accumulate_grad(*pid, &grad),
                Op::Affine { x, w, b } => {
                    // dX += dY·Wᵀ ; dW += Xᵀ·dY ; db += column sums of dY
                    {
                        let w_val = self.nodes[w.0].value.tensor();
                        acc(&mut adjoints[x.0], grad.rows(), w_val.rows(), |gx| {
                            Tensor::gemm_acc_into(gx, 1.0, &grad, false, w_val, true)
                        });
                    }
                    {
                        let x_val = self.nodes[x.0].value.tensor();
                        acc(&mut adjoints[w.0], x_val.cols(), grad.cols(), |gw| {
                            Tensor::gemm_acc_into(gw, 1.0, x_val, true, &grad, false)
                        });
                    }
                    {
                        let gb = adjoints[b.0].get_or_insert_with(|| Tensor::zeros(1, grad.cols()));
                        for r in 0..grad.rows() {
                            for c in 0..grad.cols() {
                                let v = gb.get(0, c) + grad.get(r, c);
                                gb.set(0, c, v);
                            }
                        }
                    }
                }
                Op::Matmul { a, b } => {
                    {
                        let b_val = self.nodes[b.0].value.tensor();
                        acc(&mut adjoints[a.0], grad.rows(), b_val.rows(), |ga| {
                            Tensor::gemm_acc_into(ga, 1.0, &grad, false, b_val, true)
                        });
                    }
                    {
                        let a_val = self.nodes[a.0].value.tensor();
                        acc(&mut adjoints[b.0], a_val.cols(), grad.cols(), |gb| {
                            Tensor::gemm_acc_into(gb, 1.0, a_val, true, &grad, false)
                        });
                    }
                }
                Op::MatmulNT { a, b } => {
                    // y = a·bᵀ : dA += dY·B ; dB += dYᵀ·A
                    {
                        let b_val = self.nodes[b.0].value.tensor();
                        acc(&mut adjoints[a.0], grad.rows(), b_val.cols(), |ga| {
                            Tensor::gemm_acc_into(ga, 1.0, &grad, false, b_val, false)
                        });
                    }
                    {
                        let a_val = self.nodes[a.0].value.tensor();
                        acc(&mut adjoints[b.0], grad.cols(), a_val.cols(), |gb| {
                            Tensor::gemm_acc_into(gb, 1.0, &grad, true, a_val, false)
                        });
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &grad.zip_map(y, |g, v| g * (1.0 - v * v)));
                }
                Op::Sigmoid(x) => {
                    let y = node.value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &grad.zip_map(y, |g, v| g * v * (1.0 - v)));
                }
                Op::Softplus(x) => {
                    let xv = self.nodes[x.0].value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &grad.zip_map(xv, |g, v| g * sigmoid(v)));
                }
                Op::Exp(x) => {
                    let y = node.value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &grad.zip_map(y, |g, v| g * v));
                }
                Op::Neg(x) => self.add_adjoint(&mut adjoints, *x, &grad.map(|g| -g)),
                Op::Add(a, b) => {
                    self.add_adjoint(&mut adjoints, *a, &grad);
                    self.add_adjoint(&mut adjoints, *b, &grad);
                }
                Op::Sub(a, b) => {
                    self.add_adjoint(&mut adjoints, *a, &grad);
                    self.add_adjoint(&mut adjoints, *b, &grad.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.tensor(), self.nodes[b.0].value.tensor());
                    self.add_adjoint(&mut adjoints, *a, &grad.zip_map(bv, |g, v| g * v));
                    self.add_adjoint(&mut adjoints, *b, &grad.zip_map(av, |g, v| g * v));
                }
                Op::MulScalar(x, c) => self.add_adjoint(&mut adjoints, *x, &grad.map(|g| g * c)),
                Op::AddScalar(x) => self.add_adjoint(&mut adjoints, *x, &grad),
                Op::Square(x) => {
                    let xv = self.nodes[x.0].value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &grad.zip_map(xv, |g, v| 2.0 * v * g));
                }
                Op::SumAll(x) => {
                    let g = grad.item();
                    let xv = self.nodes[x.0].value.tensor();
                    self.add_adjoint(&mut adjoints, *x, &xv.map(|_| g));
                }
                Op::MeanAll(x) => {
                    let xv = self.nodes[x.0].value.tensor();
                    let g = grad.item() / xv.numel() as f64;
                    self.add_adjoint(&mut adjoints, *x, &xv.map(|_| g));
                }
                Op::SoftmaxRows(x) => {
                    // dX_row = p ⊙ (dY_row − ⟨dY_row, p⟩)
                    let p = node.value.tensor();
                    let mut gx = Tensor::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let dot: f64 = (0..p.cols()).map(|c| grad.get(r, c) * p.get(r, c)).sum();
                        for c in 0..p.cols() {
                            gx.set(r, c, p.get(r, c) * (grad.get(r, c) - dot));
                        }
                    }
                    self.add_adjoint(&mut adjoints, *x, &gx);
                }
                Op::LogSoftmaxRows(x) => {
                    // dX_row = dY_row − softmax_row · Σ dY_row
                    let y = node.value.tensor();
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let gsum: f64 = (0..y.cols()).map(|c| grad.get(r, c)).sum();
                        for c in 0..y.cols() {
                            gx.set(r, c, grad.get(r, c) - y.get(r, c).exp() * gsum);
                        }
                    }
                    self.add_adjoint(&mut adjoints, *x, &gx);
                }
                Op::GatherCols { x, idx } => {
                    let xv = self.nodes[x.0].value.tensor();
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for (r, &c) in idx.iter().enumerate() {
                        gx.set(r, c, grad.get(r, 0));
                    }
                    self.add_adjoint(&mut adjoints, *x, &gx);
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (self.nodes[a.0].value.tensor(), self.nodes[b.0].value.tensor());
                    let ga = grad.zip_map(&av.zip_map(bv, |x, y| if x <= y { 1.0 } else { 0.0 }), |g, m| g * m);
                    let gb = grad.zip_map(&av.zip_map(bv, |x, y| if x > y { 1.0 } else { 0.0 }), |g, m| g * m);
                    self.add_adjoint(&mut adjoints, *a, &ga);
                    self.add_adjoint(&mut adjoints, *b, &gb);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.nodes[x.0].value.tensor();
                    let gx = grad.zip_map(xv, |g, v| if v >= *lo && v <= *hi { g } else { 0.0 });
                    self.add_adjoint(&mut adjoints, *x, &gx);
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.nodes[a.0].value.tensor().cols(), self.nodes[b.0].value.tensor().cols());
                    let rows = grad.rows();
                    let mut ga = Tensor::zeros(rows, ca);
                    let mut gb = Tensor::zeros(rows, cb);
                    for r in 0..rows {
                        let row = grad.row_slice(r);
                        ga.data_mut()[r * ca..(r + 1) * ca].copy_from_slice(&row[..ca]);
                        gb.data_mut()[r * cb..(r + 1) * cb].copy_from_slice(&row[ca..]);
                    }
                    self.add_adjoint(&mut adjoints, *a, &ga);
                    self.add_adjoint(&mut adjoints, *b, &gb);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pr = self.nodes[p.0].value.tensor().rows();
                        let cols = grad.cols();
                        let mut gp = Tensor::zeros(pr, cols);
                        gp.data_mut()
                            .copy_from_slice(&grad.data()[offset * cols..(offset + pr) * cols]);
                        self.add_adjoint(&mut adjoints, p, &gp);
                        offset += pr;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let xv = self.nodes[x.0].value.tensor();
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..grad.rows() {
                        for c in 0..*len {
                            gx.set(r, start + c, grad.get(r, c));
                        }
                    }
                    self.add_adjoint(&mut adjoints, *x, &gx);
                }
            }
        }
        Ok(())
    }

    fn add_adjoint(&self, adjoints: &mut [Option<Tensor>], id: NodeId, delta: &Tensor) {
        match &mut adjoints[id.0] {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (a, d) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += d;
                }
            }
            slot => *slot = Some(delta.clone()),
        }
    }
}

/// Lazily create a (rows×cols) adjoint buffer, then apply `f` to it.
fn acc(slot: &mut Option<Tensor>, rows: usize, cols: usize, f: impl FnOnce(&mut Tensor)) {
    let g = slot.get_or_insert_with(|| Tensor::zeros(rows, cols));
    f(g);
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Value-level row softmax used by the tape and by plain (untaped) forward passes.
pub fn softmax_rows_value(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for r in 0..t.rows() {
        let row = t.row_slice(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..t.cols() {
            let e = (t.get(r, c) - max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for c in 0..t.cols() {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}
