//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! A [`Graph`] records one forward computation as a flat arena of nodes.
//! Operands always precede their results, so the backward pass is a single
//! reverse sweep over node indices. Everything is `f64`.
//!
//! Learnable tensors live in a [`ParamStore`] that the graph borrows; a
//! [`Op::Param`] node carries only the handle, never a copy of the data.
//! After [`Graph::backward`], call [`Graph::take_param_grads`] and feed the
//! result to [`ParamStore::accumulate_grad`] once the graph is dropped.

use std::collections::HashMap;

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Index of a node on the tape. Only meaningful for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node(usize);

/// Softmax over a slice, stabilized by max subtraction.
///
/// The normalizer uses Kahan summation so that long rows still sum to one at
/// f64 resolution.
pub fn stable_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|z| (z - m).exp()).collect();
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &e in &exps {
        let y = e - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    exps.iter().map(|e| e / sum).collect()
}

/// `log(sum_i exp(x_i))`, stabilized by max subtraction.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

enum Op {
    Input,
    Param(ParamId),
    /// Elementwise sum of two same-shape tensors.
    Add { a: Node, b: Node },
    /// Multiply by a compile-time constant.
    Scale { x: Node, c: f64 },
    /// `W x + b` with `W: [m, n]`, `x: [n]`, `b: [m]`.
    Affine { w: Node, b: Node, x: Node },
    /// `W x`, the bias-free variant.
    MatVec { w: Node, x: Node },
    /// Inner product of two equal-length vectors.
    Dot { a: Node, b: Node },
    /// Concatenation of 1-D tensors, in order.
    Concat { parts: Vec<Node> },
    Softmax { x: Node },
    LeakyRelu { x: Node, slope: f64 },
    Elu { x: Node },
    /// `-log softmax(logits)[target]`. Probabilities are saved at forward
    /// time so backward is a subtraction.
    CrossEntropy {
        logits: Node,
        target: usize,
        probs: Vec<f64>,
    },
    /// `sum_i weights[i] * vectors[i]` with node-valued weights.
    WeightedSum { weights: Node, vectors: Vec<Node> },
    /// `sum_i coeff_i * x_i` over scalar nodes with constant coefficients.
    LinComb { terms: Vec<(f64, Node)> },
    /// Valid (no padding) 2-D convolution. `x: [ci, h, w]`,
    /// `kernel: [co, ci, kh, kw]`, `bias: [co]`.
    Conv2d {
        kernel: Node,
        bias: Node,
        x: Node,
        stride: usize,
    },
    /// `[c, h, w] -> [c]` by spatial mean.
    GlobalAvgPool { x: Node },
}

pub struct Graph<'s> {
    store: Option<&'s ParamStore>,
    ops: Vec<Op>,
    values: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    param_nodes: HashMap<ParamId, Node>,
    grad_fault: Option<ParamId>,
}

impl Graph<'static> {
    /// A graph with no parameter store. [`Graph::param`] will fail.
    pub fn new() -> Self {
        Graph {
            store: None,
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            param_nodes: HashMap::new(),
            grad_fault: None,
        }
    }
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Graph::new()
    }
}

impl<'s> Graph<'s> {
    pub fn with_params(store: &'s ParamStore) -> Self {
        Graph {
            store: Some(store),
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            param_nodes: HashMap::new(),
            grad_fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Node {
        let n = Node(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        self.grads.push(None);
        n
    }

    /// Forward value of a node. Param nodes read through to the store.
    pub fn value(&self, n: Node) -> &Tensor {
        match &self.ops[n.0] {
            Op::Param(id) => self
                .store
                .expect("param node exists only when a store is attached")
                .value(*id),
            _ => &self.values[n.0],
        }
    }

    /// Gradient of the last backward pass with respect to node `n`, if any
    /// flowed to it.
    pub fn grad(&self, n: Node) -> Option<&Tensor> {
        self.grads[n.0].as_ref()
    }

    pub fn input(&mut self, value: Tensor) -> Node {
        self.push(Op::Input, value)
    }

    /// Tape node for a stored parameter. Memoized: asking twice for the same
    /// id returns the same node, so its gradient accumulates in one place.
    pub fn param(&mut self, id: ParamId) -> Result<Node> {
        if let Some(&n) = self.param_nodes.get(&id) {
            return Ok(n);
        }
        let store = self
            .store
            .ok_or_else(|| Error::Invariant("param node on a graph without a store".into()))?;
        if id.0 >= store.len() {
            return Err(Error::Index {
                index: id.0,
                len: store.len(),
                context: "parameter id".into(),
            });
        }
        let n = self.push(Op::Param(id), Tensor::zeros(&[0]));
        self.param_nodes.insert(id, n);
        Ok(n)
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("add", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        out.add_scaled(bv, 1.0);
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn scale(&mut self, x: Node, c: f64) -> Node {
        let xv = self.value(x);
        let data: Vec<f64> = xv.data().iter().map(|v| c * v).collect();
        let out = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::Scale { x, c }, out)
    }

    pub fn affine(&mut self, w: Node, b: Node, x: Node) -> Result<Node> {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        let (m, n) = check_matvec("affine", wv, xv)?;
        if bv.shape() != [m] {
            return Err(Error::shape("affine bias", &[m], bv.shape()));
        }
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = bv.data()[i] + dot_slice(wv.row(i), xv.data());
        }
        let _ = n;
        Ok(self.push(Op::Affine { w, b, x }, Tensor::vector(out)))
    }

    pub fn matvec(&mut self, w: Node, x: Node) -> Result<Node> {
        let (wv, xv) = (self.value(w), self.value(x));
        let (m, _) = check_matvec("matvec", wv, xv)?;
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = dot_slice(wv.row(i), xv.data());
        }
        Ok(self.push(Op::MatVec { w, x }, Tensor::vector(out)))
    }

    pub fn dot(&mut self, a: Node, b: Node) -> Result<Node> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || av.shape().len() != 1 {
            return Err(Error::shape("dot", av.shape(), bv.shape()));
        }
        let out = dot_slice(av.data(), bv.data());
        Ok(self.push(Op::Dot { a, b }, Tensor::scalar(out)))
    }

    pub fn concat(&mut self, parts: &[Node]) -> Result<Node> {
        if parts.is_empty() {
            return Err(Error::Invariant("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.shape().len() != 1 {
                return Err(Error::shape("concat operand", &[pv.len()], pv.shape()));
            }
            data.extend_from_slice(pv.data());
        }
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            Tensor::vector(data),
        ))
    }

    pub fn softmax(&mut self, x: Node) -> Result<Node> {
        let xv = self.value(x);
        if xv.shape().len() != 1 || xv.is_empty() {
            return Err(Error::shape("softmax", &[1], xv.shape()));
        }
        let out = Tensor::vector(stable_softmax(xv.data()));
        Ok(self.push(Op::Softmax { x }, out))
    }

    /// Slope applies for negative inputs; the derivative at exactly zero is
    /// taken as one.
    pub fn leaky_relu(&mut self, x: Node, slope: f64) -> Node {
        let xv = self.value(x);
        let data: Vec<f64> = xv
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let out = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::LeakyRelu { x, slope }, out)
    }

    /// `x` for positive inputs, `exp(x) - 1` otherwise (unit alpha).
    pub fn elu(&mut self, x: Node) -> Node {
        let xv = self.value(x);
        let data: Vec<f64> = xv
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { v.exp_m1() })
            .collect();
        let out = Tensor::from_vec(xv.shape(), data).expect("same shape");
        self.push(Op::Elu { x }, out)
    }

    pub fn cross_entropy(&mut self, logits: Node, target: usize) -> Result<Node> {
        let lv = self.value(logits);
        if lv.shape().len() != 1 || lv.is_empty() {
            return Err(Error::shape("cross entropy logits", &[1], lv.shape()));
        }
        if target >= lv.len() {
            return Err(Error::Index {
                index: target,
                len: lv.len(),
                context: "cross entropy target".into(),
            });
        }
        let probs = stable_softmax(lv.data());
        let loss = log_sum_exp(lv.data()) - lv.data()[target];
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
        ))
    }

    pub fn weighted_sum(&mut self, weights: Node, vectors: &[Node]) -> Result<Node> {
        let wv = self.value(weights);
        if wv.shape().len() != 1 || wv.len() != vectors.len() || vectors.is_empty() {
            return Err(Error::shape("weighted sum weights", &[vectors.len()], wv.shape()));
        }
        let dim = self.value(vectors[0]).len();
        let mut out = vec![0.0; dim];
        for (i, &v) in vectors.iter().enumerate() {
            let vv = self.value(v);
            if vv.shape() != [dim] {
                return Err(Error::shape("weighted sum operand", &[dim], vv.shape()));
            }
            let w = self.value(weights).data()[i];
            for (o, x) in out.iter_mut().zip(vv.data()) {
                *o += w * x;
            }
        }
        Ok(self.push(
            Op::WeightedSum {
                weights,
                vectors: vectors.to_vec(),
            },
            Tensor::vector(out),
        ))
    }

    pub fn lin_comb(&mut self, terms: &[(f64, Node)]) -> Result<Node> {
        if terms.is_empty() {
            return Err(Error::Invariant("linear combination of zero terms".into()));
        }
        let mut total = 0.0;
        for &(c, n) in terms {
            let nv = self.value(n);
            if nv.len() != 1 {
                return Err(Error::shape("linear combination term", &[1], nv.shape()));
            }
            total += c * nv.data()[0];
        }
        Ok(self.push(
            Op::LinComb {
                terms: terms.to_vec(),
            },
            Tensor::scalar(total),
        ))
    }

    pub fn conv2d(&mut self, kernel: Node, bias: Node, x: Node, stride: usize) -> Result<Node> {
        let (kv, bv, xv) = (self.value(kernel), self.value(bias), self.value(x));
        if stride == 0 {
            return Err(Error::Invariant("conv2d stride must be positive".into()));
        }
        if xv.shape().len() != 3 {
            return Err(Error::shape("conv2d input", &[0, 0, 0], xv.shape()));
        }
        if kv.shape().len() != 4 {
            return Err(Error::shape("conv2d kernel", &[0, 0, 0, 0], kv.shape()));
        }
        let (ci, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (co, kci, kh, kw) = (kv.shape()[0], kv.shape()[1], kv.shape()[2], kv.shape()[3]);
        if kci != ci {
            return Err(Error::shape("conv2d channels", &[co, ci, kh, kw], kv.shape()));
        }
        if bv.shape() != [co] {
            return Err(Error::shape("conv2d bias", &[co], bv.shape()));
        }
        if h < kh || w < kw {
            return Err(Error::shape("conv2d spatial extent", &[ci, kh, kw], xv.shape()));
        }
        let oh = (h - kh) / stride + 1;
        let ow = (w - kw) / stride + 1;
        let mut out = Tensor::zeros(&[co, oh, ow]);
        for c in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bv.data()[c];
                    for cc in 0..ci {
                        for u in 0..kh {
                            for v in 0..kw {
                                acc += kv.data()[((c * ci + cc) * kh + u) * kw + v]
                                    * xv.data()[(cc * h + i * stride + u) * w + j * stride + v];
                            }
                        }
                    }
                    let oi = out.idx3(c, i, j);
                    out.data_mut()[oi] = acc;
                }
            }
        }
        Ok(self.push(
            Op::Conv2d {
                kernel,
                bias,
                x,
                stride,
            },
            out,
        ))
    }

    pub fn global_avg_pool(&mut self, x: Node) -> Result<Node> {
        let xv = self.value(x);
        if xv.shape().len() != 3 {
            return Err(Error::shape("global average pool input", &[0, 0, 0], xv.shape()));
        }
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let area = (h * w) as f64;
        let mut out = vec![0.0; c];
        for cc in 0..c {
            let plane = &xv.data()[cc * h * w..(cc + 1) * h * w];
            out[cc] = plane.iter().sum::<f64>() / area;
        }
        Ok(self.push(Op::GlobalAvgPool { x }, Tensor::vector(out)))
    }

    /// Backward pass seeded with one at `loss`. `loss` must be scalar.
    pub fn backward(&mut self, loss: Node) -> Result<()> {
        self.backward_seeded(loss, 1.0)
    }

    /// Backward pass with an explicit seed, used to fold a batch-mean factor
    /// into per-example passes. Resets any gradients from a previous pass.
    pub fn backward_seeded(&mut self, loss: Node, seed: f64) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward root", &[1], self.value(loss).shape()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::from_vec(self.value(loss).shape(), vec![seed])?);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].clone() else {
                continue;
            };
            for (parent, delta) in self.backward_op(i, &g) {
                self.accumulate(parent, delta);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, n: Node, delta: Tensor) {
        match &mut self.grads[n.0] {
            Some(g) => g.add_scaled(&delta, 1.0),
            slot => *slot = Some(delta),
        }
    }

    /// Contributions of node `i` to its operands' gradients. Pure with
    /// respect to the tape; accumulation happens in the caller.
    fn backward_op(&self, i: usize, g: &Tensor) -> Vec<(Node, Tensor)> {
        match &self.ops[i] {
            Op::Input | Op::Param(_) => Vec::new(),
            Op::Add { a, b } => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Scale { x, c } => {
                let data: Vec<f64> = g.data().iter().map(|v| c * v).collect();
                vec![(*x, Tensor::from_vec(g.shape(), data).expect("same shape"))]
            }
            Op::Affine { w, b, x } => {
                let mut out = self.matvec_grads(*w, *x, g);
                out.push((*b, g.clone()));
                out
            }
            Op::MatVec { w, x } => self.matvec_grads(*w, *x, g),
            Op::Dot { a, b } => {
                let gs = g.data()[0];
                let av = self.value(*a);
                let bv = self.value(*b);
                let da: Vec<f64> = bv.data().iter().map(|v| gs * v).collect();
                let db: Vec<f64> = av.data().iter().map(|v| gs * v).collect();
                vec![(*a, Tensor::vector(da)), (*b, Tensor::vector(db))]
            }
            Op::Concat { parts } => {
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    out.push((p, Tensor::vector(&g.data()[offset..offset + len])));
                    offset += len;
                }
                out
            }
            Op::Softmax { x } => {
                let y = self.values[i].data();
                let inner: f64 = g.data().iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                let dx: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(gi, yi)| yi * (gi - inner))
                    .collect();
                vec![(*x, Tensor::vector(dx))]
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(gi, &v)| if v >= 0.0 { *gi } else { slope * gi })
                    .collect();
                vec![(*x, Tensor::from_vec(g.shape(), data).expect("same shape"))]
            }
            Op::Elu { x } => {
                let xv = self.value(*x);
                let y = self.values[i].data();
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(y))
                    .map(|(gi, (&v, yi))| if v > 0.0 { *gi } else { gi * (yi + 1.0) })
                    .collect();
                vec![(*x, Tensor::from_vec(g.shape(), data).expect("same shape"))]
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let gs = g.data()[0];
                let dz: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| gs * (p - if j == *target { 1.0 } else { 0.0 }))
                    .collect();
                vec![(*logits, Tensor::vector(dz))]
            }
            Op::WeightedSum { weights, vectors } => {
                let wv = self.value(*weights);
                let mut out = Vec::with_capacity(vectors.len() + 1);
                let mut dw = vec![0.0; vectors.len()];
                for (k, &v) in vectors.iter().enumerate() {
                    let vv = self.value(v);
                    dw[k] = dot_slice(g.data(), vv.data());
                    let dv: Vec<f64> = g.data().iter().map(|gi| wv.data()[k] * gi).collect();
                    out.push((v, Tensor::vector(dv)));
                }
                out.push((*weights, Tensor::vector(dw)));
                out
            }
            Op::LinComb { terms } => {
                let gs = g.data()[0];
                terms
                    .iter()
                    .map(|&(c, n)| (n, Tensor::scalar(c * gs)))
                    .collect()
            }
            Op::Conv2d {
                kernel,
                bias,
                x,
                stride,
            } => self.conv2d_grads(*kernel, *bias, *x, *stride, g),
            Op::GlobalAvgPool { x } => {
                let xv = self.value(*x);
                let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let area = (h * w) as f64;
                let mut dx = Tensor::zeros(&[c, h, w]);
                for cc in 0..c {
                    let share = g.data()[cc] / area;
                    dx.data_mut()[cc * h * w..(cc + 1) * h * w].fill(share);
                }
                vec![(*x, dx)]
            }
        }
    }

    fn matvec_grads(&self, w: Node, x: Node, g: &Tensor) -> Vec<(Node, Tensor)> {
        let wv = self.value(w);
        let xv = self.value(x);
        let (m, n) = (wv.shape()[0], wv.shape()[1]);
        let mut dw = Tensor::zeros(&[m, n]);
        let mut dx = vec![0.0; n];
        for i in 0..m {
            let gi = g.data()[i];
            let row = wv.row(i);
            let drow = &mut dw.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                drow[j] = gi * xv.data()[j];
                dx[j] += gi * row[j];
            }
        }
        vec![(w, dw), (x, Tensor::vector(dx))]
    }

    fn conv2d_grads(
        &self,
        kernel: Node,
        bias: Node,
        x: Node,
        stride: usize,
        g: &Tensor,
    ) -> Vec<(Node, Tensor)> {
        let kv = self.value(kernel);
        let xv = self.value(x);
        let (ci, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (co, kh, kw) = (kv.shape()[0], kv.shape()[2], kv.shape()[3]);
        let (oh, ow) = (g.shape()[1], g.shape()[2]);
        let mut dk = Tensor::zeros(kv.shape());
        let mut db = vec![0.0; co];
        let mut dx = Tensor::zeros(xv.shape());
        for c in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let go = g.data()[(c * oh + i) * ow + j];
                    db[c] += go;
                    for cc in 0..ci {
                        for u in 0..kh {
                            for v in 0..kw {
                                let ki = ((c * ci + cc) * kh + u) * kw + v;
                                let xi = (cc * h + i * stride + u) * w + j * stride + v;
                                dk.data_mut()[ki] += go * xv.data()[xi];
                                dx.data_mut()[xi] += go * kv.data()[ki];
                            }
                        }
                    }
                }
            }
        }
        vec![(kernel, dk), (bias, Tensor::vector(db)), (x, dx)]
    }

    /// Gradients for every parameter node, in parameter-node creation order.
    /// Gradients are moved out; a second call returns an empty list.
    pub fn take_param_grads(&mut self) -> Vec<(ParamId, Tensor)> {
        let mut out = Vec::new();
        for i in 0..self.ops.len() {
            if let Op::Param(id) = self.ops[i] {
                if let Some(mut grad) = self.grads[i].take() {
                    if self.grad_fault == Some(id) {
                        for v in grad.data_mut() {
                            *v *= 1.5;
                        }
                    }
                    out.push((id, grad));
                }
            }
        }
        out
    }

    /// Test hook: silently corrupt the outgoing gradient of one parameter.
    /// Exists so the derivative checker can prove it catches a broken
    /// backward rule.
    #[doc(hidden)]
    pub fn inject_grad_fault(&mut self, id: ParamId) {
        self.grad_fault = Some(id);
    }
}

fn check_matvec(context: &str, w: &Tensor, x: &Tensor) -> Result<(usize, usize)> {
    if w.shape().len() != 2 {
        return Err(Error::shape(context, &[0, 0], w.shape()));
    }
    let (m, n) = (w.shape()[0], w.shape()[1]);
    if x.shape() != [n] {
        return Err(Error::shape(context, &[n], x.shape()));
    }
    Ok((m, n))
}

fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
