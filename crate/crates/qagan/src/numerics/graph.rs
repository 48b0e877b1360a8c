//! Reverse-mode autodiff over a linear tape of tensor ops.
//!
//! Every op appends a node holding its output value and the indices of its
//! inputs; `backward` replays the tape in reverse and accumulates exact
//! gradients into the `requires_grad` leaves. The op set is exactly what the
//! encoder, prediction heads, discriminator and loss terms need.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    AddRow(usize, usize),
    AddScalar(usize),
    Scale(usize, Scalar),
    Mul(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Gelu(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    ClampMin(usize, Scalar),
    SoftmaxRows { x: usize },
    LogSoftmaxRows { x: usize },
    LogSumExpRows { x: usize, mask: Option<usize> },
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: Scalar },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows { x: usize, start: usize },
    SliceCols { x: usize, start: usize },
    Gather { x: usize, coords: Vec<(usize, usize)> },
    SumAll(usize),
    Embedding { table: usize, ids: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::AddScalar(..) => "add_scalar",
            Op::Scale(..) => "scale",
            Op::Mul(..) => "mul",
            Op::Matmul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Tanh(..) => "tanh",
            Op::Gelu(..) => "gelu",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::ClampMin(..) => "clamp_min",
            Op::SoftmaxRows { .. } => "softmax_rows",
            Op::LogSoftmaxRows { .. } => "log_softmax_rows",
            Op::LogSumExpRows { .. } => "logsumexp_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather",
            Op::SumAll(..) => "sum_all",
            Op::Embedding { .. } => "embedding",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Debug, Clone)]
struct NonFinite {
    op: &'static str,
    node: usize,
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.slots.get(v.id()).and_then(|s| s.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when `v` was not on the
    /// path from the output.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor {
        match self.get(v) {
            Some(t) => t.clone(),
            None => Tensor::zeros(rows, cols),
        }
    }
}

/// The computation record: an append-only tape of executed ops.
pub struct Graph {
    nodes: Vec<Node>,
    nonfinite: Option<NonFinite>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            nonfinite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id()].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.id()].value.shape()
    }

    /// First op that produced a non-finite entry, if any.
    pub fn numeric_error(&self) -> Option<Error> {
        self.nonfinite
            .as_ref()
            .map(|nf| Error::numeric_at(nf.op, format!("tape node {}", nf.node)))
    }

    /// Extract a scalar output, failing if any op so far produced NaN/Inf.
    pub fn scalar_value(&self, v: Var) -> Result<Scalar> {
        if let Some(err) = self.numeric_error() {
            return Err(err);
        }
        self.value(v).scalar_value()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.nonfinite.is_none() {
            if let Some(_idx) = value.first_nonfinite() {
                self.nonfinite = Some(NonFinite { op: op.name(), node: id });
            }
        }
        self.nodes.push(Node { op, value, needs_grad });
        Var(id)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Differentiable leaf (parameter or checked input).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Non-differentiable constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// Re-enter an already computed value as a constant (detach).
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    // ── elementwise and arithmetic ──────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.rows(), ta.cols(), data);
        let ng = self.needs(a.id()) || self.needs(b.id());
        self.push(Op::Add(a.id(), b.id()), t, ng)
    }

    /// Broadcast-add a 1xC row vector onto every row of X.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (tx, tr) = (self.value(x), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row: rhs must be a row vector");
        assert_eq!(tx.cols(), tr.cols(), "add_row: column mismatch");
        let (r, c) = tx.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(tx.get(i, j) + tr.get(0, j));
            }
        }
        let ng = self.needs(x.id()) || self.needs(row.id());
        self.push(Op::AddRow(x.id(), row.id()), Tensor::new(r, c, data), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: Scalar) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v + c).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::AddScalar(x.id()), t, ng)
    }

    pub fn scale(&mut self, x: Var, c: Scalar) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * c).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Scale(x.id(), c), t, ng)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.rows(), ta.cols(), data);
        let ng = self.needs(a.id()) || self.needs(b.id());
        self.push(Op::Mul(a.id(), b.id()), t, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols(), tb.rows(), "matmul: inner dimension mismatch");
        let t = matmul_raw(ta, tb);
        let ng = self.needs(a.id()) || self.needs(b.id());
        self.push(Op::Matmul(a.id(), b.id()), t, ng)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let (r, c) = tx.shape();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = tx.get(i, j);
            }
        }
        let ng = self.needs(x.id());
        self.push(Op::Transpose(x.id()), Tensor::new(c, r, data), ng)
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.tanh()).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Tanh(x.id()), t, ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| gelu_fwd(v)).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Gelu(x.id()), t, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Relu(x.id()), t, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.exp()).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Exp(x.id()), t, ng)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v.ln()).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::Ln(x.id()), t, ng)
    }

    pub fn clamp_min(&mut self, x: Var, floor: Scalar) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| if v < floor { floor } else { v }).collect();
        let t = Tensor::new(tx.rows(), tx.cols(), data);
        let ng = self.needs(x.id());
        self.push(Op::ClampMin(x.id(), floor), t, ng)
    }

    // ── row-wise softmax family ─────────────────────────────────────────

    /// Row-wise softmax. An optional 1xC 0/1 mask excludes columns: masked
    /// entries come out exactly 0 and each row renormalizes over the rest.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<Var>) -> Var {
        let t = {
            let tx = self.value(x);
            let m = mask.map(|m| self.value(m));
            softmax_fwd(tx, m)
        };
        let ng = self.needs(x.id());
        self.push(Op::SoftmaxRows { x: x.id() }, t, ng)
    }

    /// Row-wise log-softmax over all columns.
    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let (r, c) = tx.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let lse = logsumexp_slice(tx.row(i), None);
            for j in 0..c {
                data.push(tx.get(i, j) - lse);
            }
        }
        let ng = self.needs(x.id());
        self.push(Op::LogSoftmaxRows { x: x.id() }, Tensor::new(r, c, data), ng)
    }

    /// Row-wise log-sum-exp (Rx1 output), optionally over a 1xC mask.
    pub fn logsumexp_rows(&mut self, x: Var, mask: Option<Var>) -> Var {
        let t = {
            let tx = self.value(x);
            let m = mask.map(|m| self.value(m));
            let r = tx.rows();
            let mut data = Vec::with_capacity(r);
            for i in 0..r {
                data.push(logsumexp_slice(tx.row(i), m.map(|mm| mm.row(0))));
            }
            Tensor::col_vec(data)
        };
        let ng = self.needs(x.id());
        self.push(Op::LogSumExpRows { x: x.id(), mask: mask.map(|m| m.id()) }, t, ng)
    }

    /// Per-row layer normalization with learned 1xC gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: Scalar) -> Var {
        let t = {
            let tx = self.value(x);
            let tg = self.value(gamma);
            let tb = self.value(beta);
            assert_eq!(tg.shape(), (1, tx.cols()), "layer_norm: gamma shape");
            assert_eq!(tb.shape(), (1, tx.cols()), "layer_norm: beta shape");
            let (r, c) = tx.shape();
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                let row = tx.row(i);
                let mean = row.iter().sum::<Scalar>() / c as Scalar;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Scalar>() / c as Scalar;
                let denom = (var + eps).sqrt();
                for j in 0..c {
                    data.push(tg.get(0, j) * (row[j] - mean) / denom + tb.get(0, j));
                }
            }
            Tensor::new(r, c, data)
        };
        let ng = self.needs(x.id()) || self.needs(gamma.id()) || self.needs(beta.id());
        self.push(
            Op::LayerNorm { x: x.id(), gamma: gamma.id(), beta: beta.id(), eps },
            t,
            ng,
        )
    }

    // ── shape ops ───────────────────────────────────────────────────────

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: empty input");
        let r = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                let tp = self.value(*p);
                assert_eq!(tp.rows(), r, "concat_cols: row mismatch");
                data.extend_from_slice(tp.row(i));
            }
        }
        let ng = parts.iter().any(|p| self.needs(p.id()));
        self.push(
            Op::ConcatCols(parts.iter().map(|p| p.id()).collect()),
            Tensor::new(r, total, data),
            ng,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let c = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
        let mut data = Vec::with_capacity(total * c);
        for p in parts {
            let tp = self.value(*p);
            assert_eq!(tp.cols(), c, "concat_rows: column mismatch");
            data.extend_from_slice(tp.data());
        }
        let ng = parts.iter().any(|p| self.needs(p.id()));
        self.push(
            Op::ConcatRows(parts.iter().map(|p| p.id()).collect()),
            Tensor::new(total, c, data),
            ng,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        assert!(start + len <= tx.rows(), "slice_rows: out of range");
        let c = tx.cols();
        let data = tx.data()[start * c..(start + len) * c].to_vec();
        let ng = self.needs(x.id());
        self.push(Op::SliceRows { x: x.id(), start }, Tensor::new(len, c, data), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        assert!(start + len <= tx.cols(), "slice_cols: out of range");
        let r = tx.rows();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&tx.row(i)[start..start + len]);
        }
        let ng = self.needs(x.id());
        self.push(Op::SliceCols { x: x.id(), start }, Tensor::new(r, len, data), ng)
    }

    /// Pick entries (row, col); output is Mx1 in coordinate order.
    pub fn gather(&mut self, x: Var, coords: &[(usize, usize)]) -> Var {
        let tx = self.value(x);
        let data = coords
            .iter()
            .map(|&(r, c)| {
                assert!(r < tx.rows() && c < tx.cols(), "gather: coordinate out of range");
                tx.get(r, c)
            })
            .collect();
        let ng = self.needs(x.id());
        self.push(
            Op::Gather { x: x.id(), coords: coords.to_vec() },
            Tensor::col_vec(data),
            ng,
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.needs(x.id());
        self.push(Op::SumAll(x.id()), Tensor::scalar(s), ng)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as Scalar)
    }

    /// Row lookup into an embedding table; output is len(ids) x D.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let tt = self.value(table);
        let d = tt.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < tt.rows(), "embedding: id {id} out of range");
            data.extend_from_slice(tt.row(id));
        }
        let ng = self.needs(table.id());
        self.push(
            Op::Embedding { table: table.id(), ids: ids.to_vec() },
            Tensor::new(ids.len(), d, data),
            ng,
        )
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse-mode gradients of a scalar output w.r.t. every
    /// `requires_grad` leaf reachable from it.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if let Some(err) = self.numeric_error() {
            return Err(err);
        }
        let out = &self.nodes[output.id()];
        if !out.value.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }

        let mut slots: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if out.needs_grad {
            slots[output.id()] = Some(Tensor::scalar(1.0));
        }

        for id in (0..=output.id()).rev() {
            let grad = match slots[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &grad, &mut slots);
            slots[id] = Some(grad);
        }

        Ok(Gradients { slots })
    }

    fn accumulate(slots: &mut [Option<Tensor>], id: usize, delta: Tensor) {
        match &mut slots[id] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: usize, grad: &Tensor, slots: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(slots, *a, grad.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(slots, *b, grad.clone());
                }
            }
            Op::AddRow(x, row) => {
                if self.needs(*x) {
                    Self::accumulate(slots, *x, grad.clone());
                }
                if self.needs(*row) {
                    let (r, c) = grad.shape();
                    let mut d = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            d[j] += grad.get(i, j);
                        }
                    }
                    Self::accumulate(slots, *row, Tensor::row_vec(d));
                }
            }
            Op::AddScalar(x) => {
                if self.needs(*x) {
                    Self::accumulate(slots, *x, grad.clone());
                }
            }
            Op::Scale(x, c) => {
                if self.needs(*x) {
                    let d = grad.data().iter().map(|g| g * c).collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let tb = &self.nodes[*b].value;
                    let d = grad.data().iter().zip(tb.data()).map(|(g, v)| g * v).collect();
                    Self::accumulate(slots, *a, Tensor::new(grad.rows(), grad.cols(), d));
                }
                if self.needs(*b) {
                    let ta = &self.nodes[*a].value;
                    let d = grad.data().iter().zip(ta.data()).map(|(g, v)| g * v).collect();
                    Self::accumulate(slots, *b, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Matmul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                if self.needs(*a) {
                    // dA = dC · B^T
                    let (m, k) = ta.shape();
                    let n = tb.cols();
                    let mut d = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad.get(i, j) * tb.get(p, j);
                            }
                            d[i * k + p] = s;
                        }
                    }
                    Self::accumulate(slots, *a, Tensor::new(m, k, d));
                }
                if self.needs(*b) {
                    // dB = A^T · dC
                    let (m, k) = ta.shape();
                    let n = tb.cols();
                    let mut d = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.get(i, p);
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                d[p * n + j] += av * grad.get(i, j);
                            }
                        }
                    }
                    Self::accumulate(slots, *b, Tensor::new(k, n, d));
                }
            }
            Op::Transpose(x) => {
                if self.needs(*x) {
                    let (r, c) = grad.shape();
                    let mut d = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            d[j * r + i] = grad.get(i, j);
                        }
                    }
                    Self::accumulate(slots, *x, Tensor::new(c, r, d));
                }
            }
            Op::Tanh(x) => {
                if self.needs(*x) {
                    let y = &node.value;
                    let d = grad
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(g, t)| g * (1.0 - t * t))
                        .collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Gelu(x) => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let d = grad
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(g, &v)| g * gelu_bwd(v))
                        .collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Relu(x) => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let d = grad
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Exp(x) => {
                if self.needs(*x) {
                    let y = &node.value;
                    let d = grad.data().iter().zip(y.data()).map(|(g, v)| g * v).collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::Ln(x) => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let d = grad.data().iter().zip(tx.data()).map(|(g, v)| g / v).collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::ClampMin(x, floor) => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let d = grad
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(g, &v)| if v > *floor { *g } else { 0.0 })
                        .collect();
                    Self::accumulate(slots, *x, Tensor::new(grad.rows(), grad.cols(), d));
                }
            }
            Op::SoftmaxRows { x } => {
                if self.needs(*x) {
                    // dx = p * (dy - sum(dy * p)); masked entries have p = 0.
                    let p = &node.value;
                    let (r, c) = p.shape();
                    let mut d = vec![0.0; r * c];
                    for i in 0..r {
                        let mut dot = 0.0;
                        for j in 0..c {
                            dot += grad.get(i, j) * p.get(i, j);
                        }
                        for j in 0..c {
                            d[i * c + j] = p.get(i, j) * (grad.get(i, j) - dot);
                        }
                    }
                    Self::accumulate(slots, *x, Tensor::new(r, c, d));
                }
            }
            Op::LogSoftmaxRows { x } => {
                if self.needs(*x) {
                    let y = &node.value;
                    let (r, c) = y.shape();
                    let mut d = vec![0.0; r * c];
                    for i in 0..r {
                        let gsum: Scalar = (0..c).map(|j| grad.get(i, j)).sum();
                        for j in 0..c {
                            d[i * c + j] = grad.get(i, j) - y.get(i, j).exp() * gsum;
                        }
                    }
                    Self::accumulate(slots, *x, Tensor::new(r, c, d));
                }
            }
            Op::LogSumExpRows { x, mask } => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let m = mask.map(|m| &self.nodes[m].value);
                    let (r, c) = tx.shape();
                    let mut d = vec![0.0; r * c];
                    for i in 0..r {
                        let lse = node.value.get(i, 0);
                        let g = grad.get(i, 0);
                        for j in 0..c {
                            let valid = m.map_or(true, |mm| mm.get(0, j) != 0.0);
                            if valid {
                                d[i * c + j] = g * (tx.get(i, j) - lse).exp();
                            }
                        }
                    }
                    Self::accumulate(slots, *x, Tensor::new(r, c, d));
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let tx = &self.nodes[*x].value;
                let tg = &self.nodes[*gamma].value;
                let (r, c) = tx.shape();
                let n = c as Scalar;
                let mut dx = vec![0.0; r * c];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for i in 0..r {
                    let row = tx.row(i);
                    let mean = row.iter().sum::<Scalar>() / n;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Scalar>() / n;
                    let denom = (var + eps).sqrt();
                    let xh: Vec<Scalar> = row.iter().map(|v| (v - mean) / denom).collect();
                    let dxh: Vec<Scalar> = (0..c).map(|j| grad.get(i, j) * tg.get(0, j)).collect();
                    let mean_dxh = dxh.iter().sum::<Scalar>() / n;
                    let mean_dxh_xh = dxh.iter().zip(&xh).map(|(a, b)| a * b).sum::<Scalar>() / n;
                    for j in 0..c {
                        dgamma[j] += grad.get(i, j) * xh[j];
                        dbeta[j] += grad.get(i, j);
                        dx[i * c + j] = (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh) / denom;
                    }
                }
                if self.needs(*x) {
                    Self::accumulate(slots, *x, Tensor::new(r, c, dx));
                }
                if self.needs(*gamma) {
                    Self::accumulate(slots, *gamma, Tensor::row_vec(dgamma));
                }
                if self.needs(*beta) {
                    Self::accumulate(slots, *beta, Tensor::row_vec(dbeta));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = &self.nodes[p].value;
                    let (r, pc) = tp.shape();
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(r * pc);
                        for i in 0..r {
                            for j in 0..pc {
                                d.push(grad.get(i, offset + j));
                            }
                        }
                        Self::accumulate(slots, p, Tensor::new(r, pc, d));
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let c = grad.cols();
                let mut offset = 0;
                for &p in parts {
                    let pr = self.nodes[p].value.rows();
                    if self.needs(p) {
                        let d = grad.data()[offset * c..(offset + pr) * c].to_vec();
                        Self::accumulate(slots, p, Tensor::new(pr, c, d));
                    }
                    offset += pr;
                }
            }
            Op::SliceRows { x, start } => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let mut d = Tensor::zeros(tx.rows(), tx.cols());
                    let c = tx.cols();
                    for i in 0..grad.rows() {
                        for j in 0..c {
                            d.set(start + i, j, grad.get(i, j));
                        }
                    }
                    Self::accumulate(slots, *x, d);
                }
            }
            Op::SliceCols { x, start } => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let mut d = Tensor::zeros(tx.rows(), tx.cols());
                    for i in 0..grad.rows() {
                        for j in 0..grad.cols() {
                            d.set(i, start + j, grad.get(i, j));
                        }
                    }
                    Self::accumulate(slots, *x, d);
                }
            }
            Op::Gather { x, coords } => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let mut d = Tensor::zeros(tx.rows(), tx.cols());
                    for (idx, &(r, c)) in coords.iter().enumerate() {
                        let v = d.get(r, c) + grad.get(idx, 0);
                        d.set(r, c, v);
                    }
                    Self::accumulate(slots, *x, d);
                }
            }
            Op::SumAll(x) => {
                if self.needs(*x) {
                    let tx = &self.nodes[*x].value;
                    let g = grad.get(0, 0);
                    Self::accumulate(slots, *x, Tensor::filled(tx.rows(), tx.cols(), g));
                }
            }
            Op::Embedding { table, ids } => {
                if self.needs(*table) {
                    let tt = &self.nodes[*table].value;
                    let d = tt.cols();
                    let mut dt = Tensor::zeros(tt.rows(), d);
                    for (t, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            let v = dt.get(id, j) + grad.get(t, j);
                            dt.set(id, j, v);
                        }
                    }
                    Self::accumulate(slots, *table, dt);
                }
            }
        }
    }
}

// ── raw kernels ─────────────────────────────────────────────────────────

pub fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let n = b.cols();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.get(i, p);
            if av == 0.0 {
                continue;
            }
            let brow = b.row(p);
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(m, n, out)
}

const GELU_S: Scalar = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: Scalar = 0.044_715;

fn gelu_fwd(x: Scalar) -> Scalar {
    0.5 * x * (1.0 + (GELU_S * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_bwd(x: Scalar) -> Scalar {
    let u = GELU_S * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_S * (1.0 + 3.0 * GELU_A * x * x)
}

fn logsumexp_slice(xs: &[Scalar], mask: Option<&[Scalar]>) -> Scalar {
    let valid = |j: usize| mask.map_or(true, |m| m[j] != 0.0);
    let mut max = Scalar::NEG_INFINITY;
    for (j, &v) in xs.iter().enumerate() {
        if valid(j) && v > max {
            max = v;
        }
    }
    assert!(
        max.is_finite(),
        "logsumexp: no valid entries in row (all-masked)"
    );
    let mut sum = 0.0;
    for (j, &v) in xs.iter().enumerate() {
        if valid(j) {
            sum += (v - max).exp();
        }
    }
    max + sum.ln()
}

fn softmax_fwd(x: &Tensor, mask: Option<&Tensor>) -> Tensor {
    if let Some(m) = mask {
        assert_eq!(m.rows(), 1, "softmax mask must be a 1xC row");
        assert_eq!(m.cols(), x.cols(), "softmax mask width mismatch");
    }
    let (r, c) = x.shape();
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        let row = x.row(i);
        let lse = logsumexp_slice(row, mask.map(|m| m.row(0)));
        for j in 0..c {
            let valid = mask.map_or(true, |m| m.get(0, j) != 0.0);
            data[i * c + j] = if valid { (row[j] - lse).exp() } else { 0.0 };
        }
    }
    Tensor::new(r, c, data)
}
