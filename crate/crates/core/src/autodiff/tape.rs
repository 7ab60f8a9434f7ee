//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive appends one node holding its forward value and the
//! handles of its parents. [`Tape::backward`] walks the nodes in reverse
//! record order and pushes adjoints to parents. Because a node can only
//! reference nodes recorded before it, the tape is acyclic by construction.
//!
//! Nodes that do not depend on any `requires_grad` leaf are marked constant
//! and skipped during the backward sweep, which is how frozen parameters
//! cost nothing in the reverse pass.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Conv1d { input: Var, weight: Var },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Transpose(Var),
    Broadcast(Var),
    IndexRows { src: Var, indices: Vec<usize> },
    LayerNorm { src: Var, inv_std: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. `None` for nodes that do
    /// not require gradients.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c[m x n] += a[m x k] * b[k x n]` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: slices are sized by the caller to cover every index reachable
    // through the given dimensions and strides; `c` is a dense m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) block sizes.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Shorthand for a leaf that does not require gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn zip_map(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn unary_map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_map("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_map("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_map("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.unary_map(a, |x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// `[m x k] * [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            0.0,
        );
        let v = Tensor::new([m, n], out)?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    /// 1-D cross-correlation over time with zero "same" padding.
    ///
    /// `input` is `[T x C_in]`, `weight` is `[C_out x C_in x K]` with odd `K`;
    /// the result is `[T x C_out]` where
    /// `out[t][o] = sum_c sum_k weight[o][c][k] * input[t + k - K/2][c]`.
    pub fn conv1d(&mut self, input: Var, weight: Var) -> Result<Var> {
        let (si, sw) = (self.shape(input), self.shape(weight));
        if si.len() != 2 || sw.len() != 3 || si[1] != sw[1] {
            return Err(shape_err("conv1d", si, sw));
        }
        let (t_len, c_in) = (si[0], si[1]);
        let (c_out, k_len) = (sw[0], sw[2]);
        if k_len % 2 == 0 {
            return Err(Error::invalid(format!("conv1d: kernel size {k_len} is not odd")));
        }
        let pad = k_len / 2;
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let mut out = vec![0.0; t_len * c_out];
        for t in 0..t_len {
            for o in 0..c_out {
                let mut acc = 0.0;
                for k in 0..k_len {
                    let src = t + k;
                    if src < pad || src - pad >= t_len {
                        continue;
                    }
                    let xrow = &x[(src - pad) * c_in..(src - pad + 1) * c_in];
                    for (c, &xv) in xrow.iter().enumerate() {
                        acc += w[(o * c_in + c) * k_len + k] * xv;
                    }
                }
                out[t * c_out + o] = acc;
            }
        }
        let v = Tensor::new([t_len, c_out], out)?;
        Ok(self.push(v, Op::Conv1d { input, weight }, &[input, weight]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.unary_map(a, sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.unary_map(a, f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.unary_map(a, |x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.unary_map(a, |x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let width = *t
            .shape()
            .last()
            .ok_or_else(|| Error::invalid("softmax: scalar input"))?;
        let mut data = t.data().to_vec();
        if width > 0 {
            for row in data.chunks_mut(width) {
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
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(v, Op::Softmax(a), &[a]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), &[a]))
    }

    /// Concatenates along `axis`; every other extent must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat: no inputs"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat: axis {axis} out of range for {base:?}")));
        }
        let mut extent = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(shape_err("concat", &base, s));
            }
            extent += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = extent;
        let (outer, _, inner) = axis_blocks(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let v = Tensor::new(shape, data)?;
        Ok(self.push(
            v,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    /// Range `[start, end)` along `axis`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(src).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::invalid(format!(
                "slice: range {start}..{end} on axis {axis} invalid for shape {s:?}"
            )));
        }
        let (outer, extent, inner) = axis_blocks(&s, axis);
        let src_t = self.value(src).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            data.extend_from_slice(&src_t[base + start * inner..base + end * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Slice { src, axis, start }, &[src]))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.ndim() != 2 {
            return Err(shape_err("transpose", t.shape(), &[]));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let v = Tensor::new([c, r], data)?;
        Ok(self.push(v, Op::Transpose(a), &[a]))
    }

    /// Repeats a vector (`[D]` or `[1 x D]`) over `steps` rows giving `[steps x D]`.
    pub fn broadcast_rows(&mut self, a: Var, steps: usize) -> Result<Var> {
        let t = self.value(a);
        let ok = t.ndim() == 1 || (t.ndim() == 2 && t.shape()[0] == 1);
        if !ok {
            return Err(shape_err("broadcast_rows", t.shape(), &[steps]));
        }
        let d = t.numel();
        let mut data = Vec::with_capacity(steps * d);
        for _ in 0..steps {
            data.extend_from_slice(t.data());
        }
        let v = Tensor::new([steps, d], data)?;
        Ok(self.push(v, Op::Broadcast(a), &[a]))
    }

    /// Gathers rows of a 2-D tensor; indices may repeat.
    pub fn index_rows(&mut self, src: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(src);
        if t.ndim() != 2 {
            return Err(shape_err("index_rows", t.shape(), &[]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::invalid(format!(
                "index_rows: row {bad} out of range for {:?}",
                t.shape()
            )));
        }
        let v = t.select_rows(indices);
        Ok(self.push(
            v,
            Op::IndexRows {
                src,
                indices: indices.to_vec(),
            },
            &[src],
        ))
    }

    /// Reverses the row order of a 2-D tensor.
    pub fn reverse_rows(&mut self, src: Var) -> Result<Var> {
        let n = self.shape(src).first().copied().unwrap_or(0);
        let idx: Vec<usize> = (0..n).rev().collect();
        self.index_rows(src, &idx)
    }

    /// Normalizes each last-axis slice to zero mean and unit variance
    /// (population variance, `eps` added before the square root).
    pub fn layer_norm(&mut self, src: Var, eps: f64) -> Result<Var> {
        let t = self.value(src);
        let width = *t
            .shape()
            .last()
            .ok_or_else(|| Error::invalid("layer_norm: scalar input"))?;
        if width == 0 {
            return Err(Error::invalid("layer_norm: empty feature axis"));
        }
        let mut data = t.data().to_vec();
        let mut inv_std = Vec::with_capacity(data.len() / width);
        for row in data.chunks_mut(width) {
            let mu = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mu) * is;
            }
            inv_std.push(is);
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(v, Op::LayerNorm { src, inv_std }, &[src]))
    }

    /// Runs the reverse sweep from a single-element `loss`.
    ///
    /// Every `requires_grad` leaf receives a gradient (zeros when the loss
    /// does not depend on it). Contributions from multiple uses of a node are
    /// summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward: loss must be scalar, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[idx].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(node, &g, &mut grads);
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(
                    Tensor::new(
                        node.value.shape().to_vec(),
                        g.unwrap_or_else(|| vec![0.0; node.value.numel()]),
                    )
                    .expect("gradient buffer matches leaf shape"),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, contrib: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.to_vec());
                }
                if self.needs(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.to_vec());
                }
                if self.needs(*b) {
                    acc(*b, g.iter().map(|x| -x).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    acc(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if self.needs(*b) {
                    acc(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, c) => acc(*a, g.iter().map(|x| x * c).collect()),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    // dA = dC * B^T
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n, 1), tb.data(), (1, n), &mut da, 0.0);
                    acc(*a, da);
                }
                if self.needs(*b) {
                    // dB = A^T * dC
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), (1, k), g, (n, 1), &mut db, 0.0);
                    acc(*b, db);
                }
            }
            Op::Conv1d { input, weight } => {
                let (tx, tw) = (self.value(*input), self.value(*weight));
                let (t_len, c_in) = (tx.rows(), tx.cols());
                let (c_out, k_len) = (tw.shape()[0], tw.shape()[2]);
                let pad = k_len / 2;
                let (x, w) = (tx.data(), tw.data());
                let need_x = self.needs(*input);
                let need_w = self.needs(*weight);
                let mut dx = vec![0.0; if need_x { x.len() } else { 0 }];
                let mut dw = vec![0.0; if need_w { w.len() } else { 0 }];
                for t in 0..t_len {
                    for o in 0..c_out {
                        let go = g[t * c_out + o];
                        if go == 0.0 {
                            continue;
                        }
                        for k in 0..k_len {
                            let src = t + k;
                            if src < pad || src - pad >= t_len {
                                continue;
                            }
                            let row = (src - pad) * c_in;
                            for c in 0..c_in {
                                let wi = (o * c_in + c) * k_len + k;
                                if need_x {
                                    dx[row + c] += w[wi] * go;
                                }
                                if need_w {
                                    dw[wi] += x[row + c] * go;
                                }
                            }
                        }
                    }
                }
                if need_x {
                    acc(*input, dx);
                }
                if need_w {
                    acc(*weight, dw);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                acc(
                    *a,
                    g.iter()
                        .zip(x)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect(),
                );
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                acc(*a, g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect());
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let width = *node.value.shape().last().expect("softmax is not scalar");
                let mut dx = vec![0.0; y.len()];
                for ((dr, yr), gr) in dx
                    .chunks_mut(width)
                    .zip(y.chunks(width))
                    .zip(g.chunks(width))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = y * (g - dot);
                    }
                }
                acc(*a, dx);
            }
            Op::Sum(a) => acc(*a, vec![g[0]; self.value(*a).numel()]),
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_blocks(node.value.shape(), *axis);
                let mut offset = 0;
                let row_len = node.value.shape()[*axis] * inner;
                for &p in parts {
                    let block = self.value(p).shape()[*axis] * inner;
                    if self.needs(p) {
                        let mut dp = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            let s = o * row_len + offset;
                            dp.extend_from_slice(&g[s..s + block]);
                        }
                        acc(p, dp);
                    }
                    offset += block;
                }
            }
            Op::Slice { src, axis, start } => {
                let ss = self.value(*src).shape();
                let (outer, extent, inner) = axis_blocks(ss, *axis);
                let len = node.value.shape()[*axis];
                let mut ds = vec![0.0; outer * extent * inner];
                for o in 0..outer {
                    let dst = o * extent * inner + start * inner;
                    let s = o * len * inner;
                    ds[dst..dst + len * inner].copy_from_slice(&g[s..s + len * inner]);
                }
                acc(*src, ds);
            }
            Op::Transpose(a) => {
                // g is [c x r]; the parent is [r x c].
                let (c, r) = (node.value.rows(), node.value.cols());
                let mut da = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                acc(*a, da);
            }
            Op::Broadcast(a) => {
                let d = self.value(*a).numel();
                let mut da = vec![0.0; d];
                for row in g.chunks(d) {
                    da.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                }
                acc(*a, da);
            }
            Op::IndexRows { src, indices } => {
                let ts = self.value(*src);
                let c = ts.cols();
                let mut ds = vec![0.0; ts.numel()];
                for (r, &i) in indices.iter().enumerate() {
                    ds[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&g[r * c..(r + 1) * c])
                        .for_each(|(d, x)| *d += x);
                }
                acc(*src, ds);
            }
            Op::LayerNorm { src, inv_std } => {
                let y = node.value.data();
                let width = *node.value.shape().last().expect("layer_norm is not scalar");
                let mut dx = vec![0.0; y.len()];
                for (((dr, yr), gr), is) in dx
                    .chunks_mut(width)
                    .zip(y.chunks(width))
                    .zip(g.chunks(width))
                    .zip(inv_std)
                {
                    let mean_g = gr.iter().sum::<f64>() / width as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / width as f64;
                    for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = is * (g - mean_g - y * mean_gy);
                    }
                }
                acc(*src, dx);
            }
        }
    }
}
