//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every primitive as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already a topological order and a
//! single reverse sweep is enough to populate gradients. A graph is built for
//! one forward pass and discarded afterwards.

use crate::error::{Error, Result};
use crate::tensor::{matmul_at_acc, matmul_bt_acc, Tensor};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Lower clamp applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Mul,
    Tanh,
    Relu,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax { input: NodeId, axis: usize },
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    BroadcastCols(NodeId),
    BroadcastRows(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Nll { probs: NodeId, target: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; gradients are kept for it when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        let needs_grad = value.requires_grad();
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value.with_grad(false))
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value.with_grad(true))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward sweep, present only for leaves that
    /// required one.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<f64>> {
        let t = &mut self.nodes[id.0].value;
        let g = t.grad().map(<[f64]>::to_vec);
        t.clear_grad();
        g
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output from {}",
                op_name(&op)
            )));
        }
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.record(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, operands: &[NodeId]) -> Result<NodeId> {
        match (op, operands) {
            (ElementwiseOp::Add, &[a, b]) => self.add(a, b),
            (ElementwiseOp::Mul, &[a, b]) => self.mul(a, b),
            (ElementwiseOp::Tanh, &[a]) => self.tanh(a),
            (ElementwiseOp::Relu, &[a]) => self.relu(a),
            _ => Err(Error::Contract(format!(
                "{op:?} called with {} operands",
                operands.len()
            ))),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn unary(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let ta = self.value(a);
        Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        self.record(value, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        self.record(value, Op::Mul(a, b), &[a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.unary(a, f64::tanh)?;
        self.record(value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.unary(a, |x| if x > 0.0 { x } else { 0.0 })?;
        self.record(value, Op::Relu(a), &[a])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.unary(a, |x| x * factor)?;
        self.record(value, Op::Scale(a, factor), &[a])
    }

    /// Softmax along `axis` (0 = down each column, 1 = along each row).
    /// Rank-1 inputs only accept axis 0.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let t = self.value(a);
        if t.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let (rows, cols) = t.dims2()?;
        if axis > 1 || (t.shape().len() == 1 && axis != 0) {
            return Err(Error::Contract(format!(
                "softmax axis {axis} invalid for shape {:?}",
                t.shape()
            )));
        }
        let mut out = t.data().to_vec();
        let (outer, inner, stride_outer, stride_inner) = if axis == 0 {
            (cols, rows, 1, cols)
        } else {
            (rows, cols, cols, 1)
        };
        for o in 0..outer {
            let idx = |i: usize| o * stride_outer + i * stride_inner;
            let max = (0..inner).map(|i| out[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..inner {
                let e = (out[idx(i)] - max).exp();
                out[idx(i)] = e;
                total += e;
            }
            for i in 0..inner {
                out[idx(i)] /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.record(value, Op::Softmax { input: a, axis }, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).transpose()?;
        self.record(value, Op::Transpose(a), &[a])
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let rows = self.value(first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::dim("concat_cols", self.value(first).shape(), self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::matrix(rows, total, out)?;
        self.record(value, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Repeats an `n×1` column `cols` times, giving `n×cols`.
    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        let t = self.value(a);
        let (rows, c) = t.dims2()?;
        if c != 1 {
            return Err(Error::dim("broadcast_cols", t.shape(), &[rows, 1]));
        }
        let value = Tensor::from_fn(rows, cols, |r, _| t.data()[r]);
        self.record(value, Op::BroadcastCols(a), &[a])
    }

    /// Repeats a `1×n` row `rows` times, giving `rows×n`.
    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        let t = self.value(a);
        let (r, cols) = t.dims2()?;
        if r != 1 || t.shape().len() != 2 {
            return Err(Error::dim("broadcast_rows", t.shape(), &[1, cols]));
        }
        let value = Tensor::from_fn(rows, cols, |_, c| t.data()[c]);
        self.record(value, Op::BroadcastRows(a), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(a).data().iter().sum();
        let value = Tensor::vector(vec![s])?;
        self.record(value, Op::Sum(a), &[a])
    }

    /// `-ln(max(p[target], LOG_FLOOR))` for a single probability vector.
    pub fn nll(&mut self, probs: NodeId, target: usize) -> Result<NodeId> {
        let t = self.value(probs);
        if target >= t.numel() {
            return Err(Error::Contract(format!(
                "label {target} out of range for {} classes",
                t.numel()
            )));
        }
        let p = t.data()[target].max(LOG_FLOOR);
        let value = Tensor::vector(vec![-p.ln()])?;
        self.record(value, Op::Nll { probs, target }, &[probs])
    }

    /// Runs the reverse sweep from a scalar `loss`. Only one sweep is
    /// permitted per graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this graph; rebuild it before differentiating again"
                    .into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k) = ta.dims2()?;
                    let n = tb.dims2()?.1;
                    if self.nodes[a.0].needs_grad {
                        let ga = slot(&mut grads, *a, m * k);
                        matmul_bt_acc(&g, tb.data(), ga, m, n, k);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = slot(&mut grads, *b, k * n);
                        matmul_at_acc(ta.data(), &g, gb, m, k, n);
                    }
                }
                Op::Add(a, b) => {
                    for x in [a, b] {
                        if self.nodes[x.0].needs_grad {
                            acc(slot(&mut grads, *x, g.len()), g.iter().copied());
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    if self.nodes[a.0].needs_grad {
                        acc(slot(&mut grads, *a, g.len()), g.iter().zip(vb).map(|(g, y)| g * y));
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(slot(&mut grads, *b, g.len()), g.iter().zip(va).map(|(g, x)| g * x));
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(
                        slot(&mut grads, *a, g.len()),
                        g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)),
                    );
                }
                Op::Relu(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc(
                        slot(&mut grads, *a, g.len()),
                        g.iter().zip(x).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }),
                    );
                }
                Op::Scale(a, f) => {
                    acc(slot(&mut grads, *a, g.len()), g.iter().map(|g| g * f));
                }
                Op::Softmax { input, axis } => {
                    let y = node.value.data();
                    let (rows, cols) = node.value.dims2()?;
                    let (outer, inner, so, si) = if *axis == 0 {
                        (cols, rows, 1, cols)
                    } else {
                        (rows, cols, cols, 1)
                    };
                    let gi = slot(&mut grads, *input, g.len());
                    for o in 0..outer {
                        let idx = |i: usize| o * so + i * si;
                        let dot: f64 = (0..inner).map(|i| g[idx(i)] * y[idx(i)]).sum();
                        for i in 0..inner {
                            gi[idx(i)] += y[idx(i)] * (g[idx(i)] - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = self.nodes[a.0].value.dims2()?;
                    let ga = slot(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        if self.nodes[p.0].needs_grad {
                            let gp = slot(&mut grads, *p, rows * w);
                            for r in 0..rows {
                                for c in 0..w {
                                    gp[r * w + c] += g[r * total + offset + c];
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::BroadcastCols(a) => {
                    let (rows, cols) = node.value.dims2()?;
                    let ga = slot(&mut grads, *a, rows);
                    for r in 0..rows {
                        ga[r] += g[r * cols..(r + 1) * cols].iter().sum::<f64>();
                    }
                }
                Op::BroadcastRows(a) => {
                    let (rows, cols) = node.value.dims2()?;
                    let ga = slot(&mut grads, *a, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[c] += g[r * cols + c];
                        }
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.numel();
                    acc(slot(&mut grads, *a, n), std::iter::repeat_n(g[0], n));
                }
                Op::Nll { probs, target } => {
                    let p = self.nodes[probs.0].value.data()[*target];
                    let n = self.nodes[probs.0].value.numel();
                    let gp = slot(&mut grads, *probs, n);
                    if p > LOG_FLOOR {
                        gp[*target] += -g[0] / p;
                    }
                }
            }
        }

        for (idx, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[idx];
            if matches!(node.op, Op::Leaf) && node.value.requires_grad() {
                let n = node.value.numel();
                node.value.set_grad(g.unwrap_or_else(|| vec![0.0; n]))?;
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn acc(dst: &mut [f64], src: impl Iterator<Item = f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Softmax { .. } => "softmax",
        Op::Transpose(_) => "transpose",
        Op::ConcatCols(_) => "concat_cols",
        Op::BroadcastCols(_) => "broadcast_cols",
        Op::BroadcastRows(_) => "broadcast_rows",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::Nll { .. } => "nll",
    }
}
