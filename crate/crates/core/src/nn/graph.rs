//! Eager tape for reverse-mode differentiation over dense matrices.
//!
//! Every operation computes its value immediately and appends a node to the
//! tape. Because nodes are appended in evaluation order, walking the tape
//! backwards from the loss is a valid reverse topological order.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::params::ParamStore;
use super::tensor::{matmul_at_raw, matmul_bt_raw, matmul_raw, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Sum(NodeId),
    BceWithLogits {
        logits: NodeId,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
    CrossEntropy {
        logits: NodeId,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
}

/// One value on the tape together with its gradient slot.
#[derive(Debug)]
pub struct TensorNode {
    value: Arc<Tensor>,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

impl TensorNode {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<TensorNode>,
    bound: BTreeMap<String, NodeId>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
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

    pub fn node(&self, id: NodeId) -> &TensorNode {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(TensorNode {
            value: Arc::new(value),
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push_shared(Arc::new(value), requires_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(TensorNode {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    /// Binds a named parameter as a trainable leaf. Repeated calls with the
    /// same name return the same node so gradients accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.bound.get(name) {
            return Ok(id);
        }
        let value = store
            .shared(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter `{name}`")))?;
        let id = self.push_shared(value, true);
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    /// Copy of `x` cut off from the tape.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let data = matmul_raw(av.data(), bv.data(), m, k, n);
        let shape = if av.shape().len() == 2 { vec![m, n] } else { vec![n] };
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op_name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let n = av.cols();
        if bv.numel() != n || bv.rows() != 1 {
            return Err(shape_err(op_name, av, bv));
        }
        let row = bv.data();
        let data = av
            .data()
            .chunks(n.max(1))
            .flat_map(|r| r.iter().zip(row).map(|(&x, &y)| f(x, y)))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    /// `a [m,n] + b [n]` with `b` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.row_broadcast("add_row", a, b, |x, y| x + y, Op::AddRow(a, b))
    }

    /// `a [m,n] * b [n]` with `b` broadcast over rows.
    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.row_broadcast("mul_row", a, b, |x, y| x * y, Op::MulRow(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * c).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x.max(0.0)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        if start + len > n {
            return Err(Error::Shape {
                op: "slice_cols",
                left: av.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let value = Tensor::matrix(m, len, data)?;
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        if start + len > m {
            return Err(Error::Shape {
                op: "slice_rows",
                left: av.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let data = av.data()[start * n..(start + len) * n].to_vec();
        let value = Tensor::matrix(len, n, data)?;
        Ok(self.push(value, Op::SliceRows(a, start), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let m = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != m {
                return Err(shape_err("concat_cols", self.value(*first), self.value(*p)));
            }
        }
        let n: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::contract("concat_rows of nothing"))?;
        let n = self.value(*first).cols();
        for p in parts {
            if self.value(*p).cols() != n {
                return Err(shape_err("concat_rows", self.value(*first), self.value(*p)));
            }
        }
        let m: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
        let mut data = Vec::with_capacity(m * n);
        for p in parts {
            data.extend_from_slice(self.value(*p).data());
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let n = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            softmax_in_place(row);
        }
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise normalization to zero mean and unit variance, then `gamma`
    /// scale and `beta` shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let xv = self.value(x);
        let d = xv.cols();
        for p in [gamma, beta] {
            let pv = self.value(p);
            if pv.numel() != d {
                return Err(shape_err("layer_norm", xv, pv));
            }
        }
        if d == 0 {
            return Err(Error::contract("layer_norm over zero-width rows"));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let m = xv.rows();
        let mut xhat = vec![0.0; m * d];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for r in 0..m {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `Σ w·(softplus(x) − t·x)`: weighted binary cross-entropy on logits.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &Tensor, weights: &Tensor) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(shape_err("bce_with_logits", lv, targets));
        }
        if lv.shape() != weights.shape() {
            return Err(shape_err("bce_with_logits", lv, weights));
        }
        let mut total = 0.0;
        for ((&x, &t), &w) in lv.data().iter().zip(targets.data()).zip(weights.data()) {
            if w != 0.0 {
                total += w * (x.max(0.0) - x * t + (-x.abs()).exp().ln_1p());
            }
        }
        let op = Op::BceWithLogits {
            logits,
            targets: targets.data().to_vec(),
            weights: weights.data().to_vec(),
        };
        Ok(self.push(Tensor::scalar(total), op, &[logits]))
    }

    /// Mean over rows of `−log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        let (m, n) = (lv.rows(), lv.cols());
        if targets.len() != m || targets.iter().any(|&t| t >= n) {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: lv.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let mut probs = lv.data().to_vec();
        let mut total = 0.0;
        for (r, row) in probs.chunks_mut(n).enumerate() {
            softmax_in_place(row);
            total -= row[targets[r]].max(f64::MIN_POSITIVE).ln();
        }
        let op = Op::CrossEntropy {
            logits,
            probs,
            targets: targets.to_vec(),
        };
        Ok(self.push(Tensor::scalar(total / m as f64), op, &[logits]))
    }

    /// Populates gradients of every node reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.requires_grad { g } else { None };
        }
        Ok(())
    }

    /// Gradients of all bound parameters, zero for parameters that did not
    /// influence the loss.
    pub fn param_grads(&self) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .map(|(name, &id)| {
                let node = &self.nodes[id.0];
                let g = node.grad.clone().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                (name.clone(), g)
            })
            .collect()
    }

    /// Like [`Graph::param_grads`] but moves the gradients off the tape.
    pub fn take_param_grads(&mut self) -> BTreeMap<String, Tensor> {
        let nodes = &mut self.nodes;
        self.bound
            .iter()
            .map(|(name, &id)| {
                let node = &mut nodes[id.0];
                let g = node.grad.take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                (name.clone(), g)
            })
            .collect()
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.bound.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    let da = matmul_bt_raw(gd, bv.data(), m, n, k);
                    self.acc(grads, *a, da);
                }
                if self.wants(*b) {
                    let db = matmul_at_raw(av.data(), gd, m, k, n);
                    self.acc(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gd.to_vec());
                self.acc(grads, *b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gd.to_vec());
                self.acc(grads, *b, gd.iter().map(|v| -v).collect());
            }
            Op::AddRow(a, b) => {
                self.acc(grads, *a, gd.to_vec());
                if self.wants(*b) {
                    self.acc(grads, *b, col_sums(gd, node.value.cols()));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    self.acc(grads, *a, gd.iter().zip(bv).map(|(g, y)| g * y).collect());
                }
                if self.wants(*b) {
                    self.acc(grads, *b, gd.iter().zip(av).map(|(g, x)| g * x).collect());
                }
            }
            Op::MulRow(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b).data());
                let n = av.cols();
                if self.wants(*a) {
                    let da = gd
                        .chunks(n.max(1))
                        .flat_map(|r| r.iter().zip(bv).map(|(g, y)| g * y))
                        .collect();
                    self.acc(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; n];
                    for (gr, xr) in gd.chunks(n.max(1)).zip(av.data().chunks(n.max(1))) {
                        for c in 0..n {
                            db[c] += gr[c] * xr[c];
                        }
                    }
                    self.acc(grads, *b, db);
                }
            }
            Op::Scale(a, c) => self.acc(grads, *a, gd.iter().map(|v| v * c).collect()),
            Op::Relu(a) => {
                let av = self.value(*a).data();
                let da = gd
                    .iter()
                    .zip(av)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.acc(grads, *a, da);
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                self.acc(grads, *a, gt.into_data());
            }
            Op::Reshape(a) => self.acc(grads, *a, gd.to_vec()),
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let (m, n) = (av.rows(), av.cols());
                let len = node.value.cols();
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    da[r * n + start..r * n + start + len].copy_from_slice(&gd[r * len..(r + 1) * len]);
                }
                self.acc(grads, *a, da);
            }
            Op::SliceRows(a, start) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut da = vec![0.0; av.numel()];
                da[start * n..start * n + gd.len()].copy_from_slice(gd);
                self.acc(grads, *a, da);
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let n = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.wants(*p) {
                        let mut dp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            dp.extend_from_slice(&gd[r * n + offset..r * n + offset + w]);
                        }
                        self.acc(grads, *p, dp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if self.wants(*p) {
                        self.acc(grads, *p, gd[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let n = node.value.cols().max(1);
                let mut da = vec![0.0; y.len()];
                for ((dr, yr), gr) in da.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..yr.len() {
                        dr[c] = yr[c] * (gr[c] - dot);
                    }
                }
                self.acc(grads, *a, da);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = node.value.cols();
                let gam = self.value(*gamma).data();
                if self.wants(*beta) {
                    self.acc(grads, *beta, col_sums(gd, d));
                }
                if self.wants(*gamma) {
                    let mut dg = vec![0.0; d];
                    for (gr, hr) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            dg[c] += gr[c] * hr[c];
                        }
                    }
                    self.acc(grads, *gamma, dg);
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; gd.len()];
                    let inv_d = 1.0 / d as f64;
                    for (r, ((dxr, gr), hr)) in dx.chunks_mut(d).zip(gd.chunks(d)).zip(xhat.chunks(d)).enumerate() {
                        let mut sum_gh = 0.0;
                        let mut sum_ghx = 0.0;
                        for c in 0..d {
                            let gh = gr[c] * gam[c];
                            sum_gh += gh;
                            sum_ghx += gh * hr[c];
                        }
                        for c in 0..d {
                            let gh = gr[c] * gam[c];
                            dxr[c] = inv_std[r] * (gh - inv_d * sum_gh - hr[c] * inv_d * sum_ghx);
                        }
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.acc(grads, *a, vec![gd[0]; n]);
            }
            Op::BceWithLogits {
                logits,
                targets,
                weights,
            } => {
                let lv = self.value(*logits).data();
                let da = lv
                    .iter()
                    .zip(targets)
                    .zip(weights)
                    .map(|((&x, &t), &w)| gd[0] * w * (sigmoid(x) - t))
                    .collect();
                self.acc(grads, *logits, da);
            }
            Op::CrossEntropy { logits, probs, targets } => {
                let n = self.value(*logits).cols();
                let m = targets.len() as f64;
                let mut da = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    da[r * n + t] -= 1.0;
                }
                for v in da.iter_mut() {
                    *v *= gd[0] / m;
                }
                self.acc(grads, *logits, da);
            }
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn acc(&self, grads: &mut [Option<Tensor>], id: NodeId, data: Vec<f64>) {
        if !self.wants(id) {
            return;
        }
        let shape = self.nodes[id.0].value.shape().to_vec();
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(&data) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(Tensor::new(shape, data).expect("gradient shape")),
        }
    }
}

fn col_sums(data: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for row in data.chunks(n.max(1)) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 5.0]), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0), true);
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), 9.0);
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = g.scale(x, 2.0);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_leaf_gets_no_grad_and_params_get_zero() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::vector(vec![1.0, 2.0]));
        store.insert("b", Tensor::vector(vec![3.0]));
        let mut g = Graph::new();
        let a = g.param(&store, "a").unwrap();
        let _b = g.param(&store, "b").unwrap();
        let s = g.sum(a);
        g.backward(s).unwrap();
        let grads = g.param_grads();
        assert_eq!(grads["a"].data(), &[1.0, 1.0]);
        assert_eq!(grads["b"].data(), &[0.0]);
    }

    #[test]
    fn repeated_param_binding_shares_node() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(2.0));
        let mut g = Graph::new();
        let w1 = g.param(&store, "w").unwrap();
        let w2 = g.param(&store, "w").unwrap();
        assert_eq!(w1, w2);
        let y = g.mul(w1, w2).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.param_grads()["w"].item(), 4.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1e9, 0.0, 0.5]).unwrap(),
            false,
        );
        let y = g.softmax_rows(x);
        let v = g.value(y);
        for r in 0..2 {
            let s: f64 = v.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(v.at(1, 0), 0.0);
    }
}
