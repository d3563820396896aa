//! Eager tape for reverse-mode differentiation.
//!
//! Every operation evaluates immediately and appends a node holding its
//! output, so node ids are a topological order by construction. `backward`
//! walks the tape once in reverse, accumulating adjoints with `+=` so that a
//! value consumed by several operations receives the sum of its
//! contributions.

use super::ops::{self, Activation, LayerNormCache};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    Softmax { input: NodeId, valid: usize },
    Act(NodeId, Activation),
    MeanRows { input: NodeId, count: usize },
    LayerNorm {
        input: NodeId,
        gain: NodeId,
        bias: NodeId,
        cache: LayerNormCache,
    },
    ConcatCols(Vec<NodeId>),
    Sum(NodeId),
    /// Elementwise multiply by a fixed mask (dropout).
    Mask(NodeId, Vec<f64>),
    Mse { preds: Vec<NodeId>, targets: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// The compute graph (tape) of one forward pass.
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

    /// Adds a leaf whose `requires_grad` flag is taken from the tensor.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value.with_requires_grad())
    }

    /// Adds a constant leaf.
    pub fn constant(&mut self, mut value: Tensor) -> NodeId {
        value.set_requires_grad(false);
        self.leaf(value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    /// Gradient as a tensor; zeros when nothing flowed into the node.
    pub fn grad_tensor(&self, id: NodeId) -> Tensor {
        let v = &self.nodes[id.0].value;
        match v.grad() {
            Some(g) => Tensor::from_vec(v.rows(), v.cols(), g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(v.rows(), v.cols()),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push_op(Op::MatMul(a, b), v, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push_op(Op::Add(a, b), v, &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push_op(Op::Sub(a, b), v, &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push_op(Op::Mul(a, b), v, &[a, b]))
    }

    /// Adds a 1 x n row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(x).add_row(self.value(bias))?;
        Ok(self.push_op(Op::AddRow(x, bias), v, &[x, bias]))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x).scale(factor);
        self.push_op(Op::Scale(x, factor), v, &[x])
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        self.push_op(Op::Transpose(x), v, &[x])
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let cols = self.value(x).cols();
        self.masked_softmax_rows(x, cols)
    }

    /// Softmax over the first `valid` columns of each row; the rest get 0.
    pub fn masked_softmax_rows(&mut self, x: NodeId, valid: usize) -> Result<NodeId> {
        let v = ops::masked_softmax_rows(self.value(x), valid)?;
        Ok(self.push_op(Op::Softmax { input: x, valid }, v, &[x]))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let v = ops::activation(self.value(x), kind);
        self.push_op(Op::Act(x, kind), v, &[x])
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let rows = self.value(x).rows();
        self.mean_leading_rows(x, rows)
    }

    pub fn mean_leading_rows(&mut self, x: NodeId, count: usize) -> Result<NodeId> {
        let v = ops::mean_leading_rows(self.value(x), count)?;
        Ok(self.push_op(Op::MeanRows { input: x, count }, v, &[x]))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (v, cache) = ops::layer_norm(self.value(x), self.value(gain), self.value(bias))?;
        Ok(self.push_op(
            Op::LayerNorm {
                input: x,
                gain,
                bias,
                cache,
            },
            v,
            &[x, gain, bias],
        ))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ops::concat_cols(&values)?;
        Ok(self.push_op(Op::ConcatCols(parts.to_vec()), v, parts))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.push_op(Op::Sum(x), v, &[x])
    }

    /// Elementwise product with a constant mask of the same shape.
    pub fn mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::dim(
                "mask",
                format!("mask of {} for {}x{}", mask.len(), xv.rows(), xv.cols()),
            ));
        }
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let v = Tensor::from_vec(xv.rows(), xv.cols(), data)?;
        Ok(self.push_op(Op::Mask(x, mask), v, &[x]))
    }

    /// Mean squared error of scalar prediction nodes against fixed targets.
    pub fn mse(&mut self, preds: &[NodeId], targets: &[f64]) -> Result<NodeId> {
        if preds.len() != targets.len() || preds.is_empty() {
            return Err(Error::Usage(format!(
                "mse needs equal nonzero lengths, got {} predictions and {} targets",
                preds.len(),
                targets.len()
            )));
        }
        let mut total = 0.0;
        for (&p, &t) in preds.iter().zip(targets) {
            let d = self.value(p).item()? - t;
            total += d * d;
        }
        let v = Tensor::scalar(total / preds.len() as f64);
        Ok(self.push_op(
            Op::Mse {
                preds: preds.to_vec(),
                targets: targets.to_vec(),
            },
            v,
            preds,
        ))
    }

    /// Clears every gradient slot so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
        self.backward_done = false;
    }

    /// Propagates d(loss)/d(node) to every node that requires grad.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != (1, 1) {
            return Err(Error::dim(
                "backward",
                format!("loss must be 1x1, got {}x{}", lv.rows(), lv.cols()),
            ));
        }
        if !lv.requires_grad() {
            return Err(Error::Usage(
                "backward called on a loss with no trainable inputs".into(),
            ));
        }
        if self.backward_done {
            return Err(Error::Usage(
                "backward already ran on this graph; call zero_grad first".into(),
            ));
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            self.propagate(i, &g, &mut adj)?;
            self.nodes[i].value.accumulate_grad(&g);
        }
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gt = Tensor::from_vec(out.rows(), out.cols(), g.to_vec())?;
                if self.needs(*a) {
                    let da = ops::matmul_nt(&gt, self.value(*b))?;
                    self.acc(adj, *a, da.data());
                }
                if self.needs(*b) {
                    let db = ops::matmul_tn(self.value(*a), &gt)?;
                    self.acc(adj, *b, db.data());
                }
            }
            Op::Add(a, b) => {
                self.acc(adj, *a, g);
                self.acc(adj, *b, g);
            }
            Op::Sub(a, b) => {
                self.acc(adj, *a, g);
                if self.needs(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    self.acc(adj, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    self.acc(adj, *a, &d);
                }
                if self.needs(*b) {
                    let d: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    self.acc(adj, *b, &d);
                }
            }
            Op::AddRow(x, bias) => {
                self.acc(adj, *x, g);
                if self.needs(*bias) {
                    let cols = out.cols();
                    let mut d = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    self.acc(adj, *bias, &d);
                }
            }
            Op::Scale(x, f) => {
                let d: Vec<f64> = g.iter().map(|v| v * f).collect();
                self.acc(adj, *x, &d);
            }
            Op::Transpose(x) => {
                let gt = Tensor::from_vec(out.rows(), out.cols(), g.to_vec())?.transpose();
                self.acc(adj, *x, gt.data());
            }
            Op::Softmax { input, valid } => {
                // dx_j = s_j (g_j - Σ_k g_k s_k), restricted to the kept columns.
                let cols = out.cols();
                let mut d = vec![0.0; g.len()];
                for r in 0..out.rows() {
                    let s = &out.row(r)[..*valid];
                    let gr = &g[r * cols..r * cols + valid];
                    let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..*valid {
                        d[r * cols + c] = s[c] * (gr[c] - dot);
                    }
                }
                self.acc(adj, *input, &d);
            }
            Op::Act(x, kind) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(gv, &xv)| gv * kind.derivative(xv))
                    .collect();
                self.acc(adj, *x, &d);
            }
            Op::MeanRows { input, count } => {
                let xv = self.value(*input);
                let cols = xv.cols();
                let inv = 1.0 / *count as f64;
                let mut d = vec![0.0; xv.len()];
                for r in 0..*count {
                    for c in 0..cols {
                        d[r * cols + c] = g[c] * inv;
                    }
                }
                self.acc(adj, *input, &d);
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                cache,
            } => {
                let cols = out.cols();
                let n = cols as f64;
                let gain_v = self.value(*gain).data();
                if self.needs(*input) {
                    let mut d = vec![0.0; g.len()];
                    for r in 0..out.rows() {
                        let xhat = cache.normalized.row(r);
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dxhat: Vec<f64> = gr.iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let mean_d: f64 = dxhat.iter().sum::<f64>() / n;
                        let mean_dx: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..cols {
                            d[r * cols + c] = cache.inv_std[r] * (dxhat[c] - mean_d - xhat[c] * mean_dx);
                        }
                    }
                    self.acc(adj, *input, &d);
                }
                if self.needs(*gain) {
                    let mut d = vec![0.0; cols];
                    for r in 0..out.rows() {
                        let xhat = cache.normalized.row(r);
                        for c in 0..cols {
                            d[c] += g[r * cols + c] * xhat[c];
                        }
                    }
                    self.acc(adj, *gain, &d);
                }
                if self.needs(*bias) {
                    let mut d = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    self.acc(adj, *bias, &d);
                }
            }
            Op::ConcatCols(parts) => {
                let cols = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(out.rows() * pc);
                        for r in 0..out.rows() {
                            d.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                        }
                        self.acc(adj, p, &d);
                    }
                    offset += pc;
                }
            }
            Op::Sum(x) => {
                let d = vec![g[0]; self.value(*x).len()];
                self.acc(adj, *x, &d);
            }
            Op::Mask(x, mask) => {
                let d: Vec<f64> = g.iter().zip(mask).map(|(a, m)| a * m).collect();
                self.acc(adj, *x, &d);
            }
            Op::Mse { preds, targets } => {
                let scale = 2.0 * g[0] / preds.len() as f64;
                for (&p, &t) in preds.iter().zip(targets) {
                    let d = scale * (self.value(p).item()? - t);
                    self.acc(adj, p, &[d]);
                }
            }
        }
        Ok(())
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].value.requires_grad()
    }

    fn acc(&self, adj: &mut [Option<Vec<f64>>], id: NodeId, delta: &[f64]) {
        if !self.needs(id) {
            return;
        }
        match &mut adj[id.0] {
            Some(buf) => buf.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    fn push_op(&mut self, op: Op, mut value: Tensor, inputs: &[NodeId]) -> NodeId {
        value.set_requires_grad(inputs.iter().any(|&i| self.needs(i)));
        self.push(op, value)
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[[1.0, -2.0, 3.0]]).unwrap());
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[[0.5, 2.0]]).unwrap());
        let y = g.add(x, x).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(1, 2));
        assert!(matches!(g.backward(x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn detached_loss_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(1, 2));
        let loss = g.sum(x);
        assert!(matches!(g.backward(loss), Err(Error::Usage(_))));
    }

    #[test]
    fn repeated_backward_requires_reset() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.0));
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::Usage(_))));
        g.zero_grad();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn constants_receive_no_grad() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_rows(&[[2.0]]).unwrap());
        let c = g.constant(Tensor::from_rows(&[[5.0]]).unwrap());
        let y = g.matmul(c, w).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[5.0]);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn mse_value_and_gradient() {
        let mut g = Graph::new();
        let p0 = g.param(Tensor::scalar(1.0));
        let p1 = g.param(Tensor::scalar(2.0));
        let loss = g.mse(&[p0, p1], &[3.0, 0.0]).unwrap();
        assert_eq!(g.value(loss).item().unwrap(), 4.0);
        g.backward(loss).unwrap();
        // d/dp (1/2)Σ(p-t)^2 = (p - t)
        assert_eq!(g.grad(p0).unwrap(), &[-2.0]);
        assert_eq!(g.grad(p1).unwrap(), &[2.0]);
    }
}
