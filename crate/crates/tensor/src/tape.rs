//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Var`] runs eagerly on [`Tensor`] values and
//! appends a node to its [`Tape`]. [`Tape::backward`] walks the nodes in
//! reverse creation order (a valid reverse topological order, since parents
//! are always created before children) and accumulates vector-Jacobian
//! products into per-node gradients.
//!
//! A tape is single-threaded. Independent forward/backward passes (one per
//! batch item, say) each own a tape; parameter tensors are shared between
//! them through `Arc`.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::gemm::gemm;
use crate::tensor::{axis_select_indices, gelu_grad, Tensor};

enum Op {
    Leaf,
    /// Leading axes of `a` flattened into rows; `b` is 2-D, optionally transposed.
    MatMul { a: usize, b: usize, tb: bool },
    BatchMatMul { a: usize, b: usize, tb: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow { x: usize, bias: usize },
    Scale(usize, f64),
    Transpose(usize),
    SwapLeading(usize),
    Reshape(usize),
    Gather { x: usize, index: Arc<[usize]> },
    Concat { parts: Vec<usize>, axis: usize },
    Gelu(usize),
    Sum(usize),
    Mean(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Kron(usize, usize),
    CrossEntropy {
        logits: usize,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visited: usize,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any flowed to it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`; zeros when `var` did not contribute.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }


    /// Move the gradient of `var` out; zeros when `var` did not contribute.
    pub fn take(&mut self, var: Var<'_>) -> Tensor {
        self.grads
            .get_mut(var.id)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }

    /// Number of nodes the reverse sweep walked through.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_arc(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Concatenate along `axis`.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat(&refs, axis)?;
        let needs = parts.iter().any(|p| self.needs(p.id));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            needs,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(&loss_shape));
        let mut visited = 0;
        for id in (0..=loss.id).rev() {
            visited += 1;
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            backprop(&nodes, id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let needs = |i: usize| nodes[i].needs_grad;
    let val = |i: usize| nodes[i].value.as_ref();
    let out = nodes[id].value.as_ref();
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, tb } => {
            let av = val(a);
            let bv = val(b);
            let (m, k) = av.as_matrix_dims("matmul")?;
            let n = out.last_dim();
            if needs(a) {
                // dA = G · op(B)ᵀ
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, bv.data(), !tb, &mut da, false);
                accumulate(grads, a, Tensor::new(av.shape(), da)?)?;
            }
            if needs(b) {
                let mut db = vec![0.0; k * n];
                if tb {
                    // B is n×k: dB = Gᵀ · A
                    gemm(n, m, k, g.data(), true, av.data(), false, &mut db, false);
                } else {
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut db, false);
                }
                accumulate(grads, b, Tensor::new(bv.shape(), db)?)?;
            }
        }
        &Op::BatchMatMul { a, b, tb } => {
            let av = val(a);
            let bv = val(b);
            let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
            let n = out.last_dim();
            let (sa, sb, sg) = (m * k, k * n, m * n);
            if needs(a) {
                let mut da = vec![0.0; av.len()];
                for i in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g.data()[i * sg..(i + 1) * sg],
                        false,
                        &bv.data()[i * sb..(i + 1) * sb],
                        !tb,
                        &mut da[i * sa..(i + 1) * sa],
                        false,
                    );
                }
                accumulate(grads, a, Tensor::new(av.shape(), da)?)?;
            }
            if needs(b) {
                let mut db = vec![0.0; bv.len()];
                for i in 0..batch {
                    let gi = &g.data()[i * sg..(i + 1) * sg];
                    let ai = &av.data()[i * sa..(i + 1) * sa];
                    let dbi = &mut db[i * sb..(i + 1) * sb];
                    if tb {
                        gemm(n, m, k, gi, true, ai, false, dbi, false);
                    } else {
                        gemm(k, m, n, ai, true, gi, false, dbi, false);
                    }
                }
                accumulate(grads, b, Tensor::new(bv.shape(), db)?)?;
            }
        }
        &Op::Add(a, b) => {
            if needs(a) {
                accumulate(grads, a, g.clone())?;
            }
            if needs(b) {
                accumulate(grads, b, g.clone())?;
            }
        }
        &Op::Sub(a, b) => {
            if needs(a) {
                accumulate(grads, a, g.clone())?;
            }
            if needs(b) {
                accumulate(grads, b, g.scale(-1.0))?;
            }
        }
        &Op::Mul(a, b) => {
            if needs(a) {
                accumulate(grads, a, g.mul(val(b))?)?;
            }
            if needs(b) {
                accumulate(grads, b, g.mul(val(a))?)?;
            }
        }
        &Op::AddRow { x, bias } => {
            if needs(x) {
                accumulate(grads, x, g.clone())?;
            }
            if needs(bias) {
                let d = g.last_dim();
                let mut db = vec![0.0; d];
                for row in g.data().chunks(d) {
                    db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                }
                accumulate(grads, bias, Tensor::new(&[d], db)?)?;
            }
        }
        &Op::Scale(x, f) => {
            if needs(x) {
                accumulate(grads, x, g.scale(f))?;
            }
        }
        &Op::Transpose(x) => {
            if needs(x) {
                accumulate(grads, x, g.transpose()?)?;
            }
        }
        &Op::SwapLeading(x) => {
            if needs(x) {
                accumulate(grads, x, g.swap_leading()?)?;
            }
        }
        &Op::Reshape(x) => {
            if needs(x) {
                accumulate(grads, x, g.reshape(val(x).shape())?)?;
            }
        }
        Op::Gather { x, index } => {
            if needs(*x) {
                let xv = val(*x);
                let mut dx = vec![0.0; xv.len()];
                for (&i, &gv) in index.iter().zip(g.data()) {
                    dx[i] += gv;
                }
                accumulate(grads, *x, Tensor::new(xv.shape(), dx)?)?;
            }
        }
        Op::Concat { parts, axis } => {
            let axis = *axis;
            let mut offset = 0;
            for &p in parts {
                let pv = val(p);
                let extent = pv.shape()[axis];
                if needs(p) {
                    let picks: Vec<usize> = (offset..offset + extent).collect();
                    let idx = axis_select_indices(g.shape(), axis, &picks);
                    accumulate(grads, p, g.gather(&idx, pv.shape())?)?;
                }
                offset += extent;
            }
        }
        &Op::Gelu(x) => {
            if needs(x) {
                let xv = val(x);
                let data = g.data().iter().zip(xv.data()).map(|(&gi, &x)| gi * gelu_grad(x)).collect();
                let dx = Tensor::new(xv.shape(), data)?;
                accumulate(grads, x, dx)?;
            }
        }
        &Op::Sum(x) => {
            if needs(x) {
                let gv = g.data()[0];
                accumulate(grads, x, Tensor::full(val(x).shape(), gv))?;
            }
        }
        &Op::Mean(x) => {
            if needs(x) {
                let xv = val(x);
                let gv = g.data()[0] / xv.len() as f64;
                accumulate(grads, x, Tensor::full(xv.shape(), gv))?;
            }
        }
        &Op::Softmax(x) => {
            if needs(x) {
                let n = out.last_dim();
                let mut dx = vec![0.0; out.len()];
                for ((y, gr), d) in out
                    .data()
                    .chunks(n)
                    .zip(g.data().chunks(n))
                    .zip(dx.chunks_mut(n))
                {
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[j] = y[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, x, Tensor::new(out.shape(), dx)?)?;
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let d = out.last_dim();
            let gam = val(*gamma);
            if needs(*gamma) || needs(*beta) {
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                for (gr, h) in g.data().chunks(d).zip(xhat.data().chunks(d)) {
                    for j in 0..d {
                        dg[j] += gr[j] * h[j];
                        db[j] += gr[j];
                    }
                }
                if needs(*gamma) {
                    accumulate(grads, *gamma, Tensor::new(gam.shape(), dg)?)?;
                }
                if needs(*beta) {
                    accumulate(grads, *beta, Tensor::new(val(*beta).shape(), db)?)?;
                }
            }
            if needs(*x) {
                let mut dx = vec![0.0; out.len()];
                let df = d as f64;
                for (r, ((gr, h), dxr)) in g
                    .data()
                    .chunks(d)
                    .zip(xhat.data().chunks(d))
                    .zip(dx.chunks_mut(d))
                    .enumerate()
                {
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        let dh = gr[j] * gam.data()[j];
                        sum_dh += dh;
                        sum_dh_h += dh * h[j];
                    }
                    for j in 0..d {
                        let dh = gr[j] * gam.data()[j];
                        dxr[j] = inv_std[r] / df * (df * dh - sum_dh - h[j] * sum_dh_h);
                    }
                }
                accumulate(grads, *x, Tensor::new(out.shape(), dx)?)?;
            }
        }
        &Op::Kron(a, b) => {
            let av = val(a);
            let bv = val(b);
            let (p, q) = av.dims2()?;
            let (m, n) = bv.dims2()?;
            let cols = q * n;
            let gd = g.data();
            if needs(a) {
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    for j in 0..q {
                        let mut s = 0.0;
                        for k in 0..m {
                            let row = (i * m + k) * cols + j * n;
                            for l in 0..n {
                                s += gd[row + l] * bv.data()[k * n + l];
                            }
                        }
                        da[i * q + j] = s;
                    }
                }
                accumulate(grads, a, Tensor::new(&[p, q], da)?)?;
            }
            if needs(b) {
                let mut db = vec![0.0; m * n];
                for i in 0..p {
                    for j in 0..q {
                        let aij = av.data()[i * q + j];
                        for k in 0..m {
                            let row = (i * m + k) * cols + j * n;
                            for l in 0..n {
                                db[k * n + l] += gd[row + l] * aij;
                            }
                        }
                    }
                }
                accumulate(grads, b, Tensor::new(&[m, n], db)?)?;
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            if needs(*logits) {
                let k = probs.last_dim();
                let batch = labels.len() as f64;
                let scale = g.data()[0] / batch;
                let mut dx = probs.data().to_vec();
                for (r, &label) in labels.iter().enumerate() {
                    dx[r * k + label] -= 1.0;
                }
                dx.iter_mut().for_each(|v| *v *= scale);
                accumulate(grads, *logits, Tensor::new(probs.shape(), dx)?)?;
            }
        }
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let needs = self.requires_grad();
        self.tape.push(value, op, needs)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let needs = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, needs)
    }

    /// Matrix product with a 2-D right operand.
    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().matmul(&rhs.value())?;
        Ok(self.binary(
            rhs,
            v,
            Op::MatMul {
                a: self.id,
                b: rhs.id,
                tb: false,
            },
        ))
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().matmul_t(&rhs.value())?;
        Ok(self.binary(
            rhs,
            v,
            Op::MatMul {
                a: self.id,
                b: rhs.id,
                tb: true,
            },
        ))
    }

    /// Batched product of two rank-3 values.
    pub fn bmm(self, rhs: Var<'t>, transpose_rhs: bool) -> Result<Var<'t>> {
        let v = self.value().bmm(&rhs.value(), transpose_rhs)?;
        Ok(self.binary(
            rhs,
            v,
            Op::BatchMatMul {
                a: self.id,
                b: rhs.id,
                tb: transpose_rhs,
            },
        ))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().add(&rhs.value())?;
        Ok(self.binary(rhs, v, Op::Add(self.id, rhs.id)))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().sub(&rhs.value())?;
        Ok(self.binary(rhs, v, Op::Sub(self.id, rhs.id)))
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().mul(&rhs.value())?;
        Ok(self.binary(rhs, v, Op::Mul(self.id, rhs.id)))
    }

    /// Add a bias vector to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().add_row(&bias.value())?;
        Ok(self.binary(
            bias,
            v,
            Op::AddRow {
                x: self.id,
                bias: bias.id,
            },
        ))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let v = self.value().scale(factor);
        self.unary(v, Op::Scale(self.id, factor))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = self.value().transpose()?;
        Ok(self.unary(v, Op::Transpose(self.id)))
    }

    pub fn swap_leading(self) -> Result<Var<'t>> {
        let v = self.value().swap_leading()?;
        Ok(self.unary(v, Op::SwapLeading(self.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// `out.flat[i] = self.flat[index[i]]`.
    pub fn gather(self, index: Arc<[usize]>, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().gather(&index, shape)?;
        Ok(self.unary(v, Op::Gather { x: self.id, index }))
    }

    /// Pick entries `picks` along `axis`.
    pub fn index_select(self, axis: usize, picks: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(TensorError::Rank {
                op: "index_select",
                expected: axis + 1,
                shape,
            });
        }
        if let Some(&bad) = picks.iter().find(|&&p| p >= shape[axis]) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                extent: shape[axis],
            });
        }
        let idx = axis_select_indices(&shape, axis, picks);
        let mut out_shape = shape;
        out_shape[axis] = picks.len();
        self.gather(idx.into(), &out_shape)
    }

    /// Contiguous range `start..start + len` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let picks: Vec<usize> = (start..start + len).collect();
        self.index_select(axis, &picks)
    }

    pub fn gelu(self) -> Var<'t> {
        let v = self.value().gelu();
        self.unary(v, Op::Gelu(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().mean());
        self.unary(v, Op::Mean(self.id))
    }

    /// Mean squared difference to `target`.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>> {
        let diff = self.sub(target)?;
        Ok(diff.mul(diff)?.mean())
    }

    /// Softmax over the last axis; see [`Tensor::softmax`] for mask layout.
    pub fn softmax(self, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let v = self.value().softmax(mask)?;
        Ok(self.unary(v, Op::Softmax(self.id)))
    }

    pub fn layernorm(self, gamma: Var<'t>, beta: Var<'t>) -> Result<Var<'t>> {
        let (out, xhat, inv_std) = self.value().layernorm_parts(&gamma.value(), &beta.value())?;
        let needs = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Ok(self.tape.push(
            out,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    pub fn kron(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().kron(&rhs.value())?;
        Ok(self.binary(rhs, v, Op::Kron(self.id, rhs.id)))
    }

    /// Mean softmax cross-entropy of `[B, K]` logits against class labels.
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Var<'t>> {
        let logits = self.value();
        let (b, k) = logits.dims2()?;
        if labels.len() != b {
            return Err(TensorError::Invalid(format!(
                "{} labels for {b} rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                extent: k,
            });
        }
        let probs = logits.softmax(None)?;
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(r, &l)| probs.data()[r * k + l].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b as f64;
        Ok(self.unary(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: self.id,
                labels: labels.into(),
                probs,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_gradient() {
        // loss = sum(W·x): dW[i, j] = x[j] for every row i
        let tape = Tape::new();
        let w = tape.param(Arc::new(Tensor::from_fn(&[3, 2], |i| i as f64)));
        let x = tape.constant(Tensor::new(&[2, 1], vec![0.5, -2.0]).unwrap());
        let loss = w.matmul(x).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        let gw = g.wrt(w);
        for i in 0..3 {
            assert_eq!(gw.at(&[i, 0]), 0.5);
            assert_eq!(gw.at(&[i, 1]), -2.0);
        }
        assert!(g.get(x).is_none());
    }

    #[test]
    fn unused_parameter_gets_zero() {
        let tape = Tape::new();
        let a = tape.param(Arc::new(Tensor::ones(&[2])));
        let unused = tape.param(Arc::new(Tensor::ones(&[3])));
        let loss = a.sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros(&[3]));
        assert_eq!(g.visited(), tape.len());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let a = tape.param(Arc::new(Tensor::ones(&[2])));
        assert!(matches!(
            tape.backward(a),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(a * a) + sum(a) -> 2a + 1
        let tape = Tape::new();
        let a = tape.param(Arc::new(Tensor::new(&[2], vec![1.5, -3.0]).unwrap()));
        let loss = a.mul(a).unwrap().sum().add(a.sum()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a).data(), &[4.0, -5.0]);
    }

    #[test]
    fn cross_entropy_value() {
        let tape = Tape::new();
        let z = tape.param(Arc::new(Tensor::zeros(&[2, 4])));
        let loss = z.cross_entropy(&[1, 3]).unwrap();
        assert!((loss.value().item().unwrap() - 4f64.ln()).abs() < 1e-12);
        let g = tape.backward(loss).unwrap().wrt(z);
        assert!((g.at(&[0, 1]) - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!((g.at(&[0, 0]) - 0.125).abs() < 1e-12);
    }
}

