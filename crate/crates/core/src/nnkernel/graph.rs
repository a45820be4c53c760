//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records one forward computation; [`Graph::backward`] then
//! accumulates exact adjoints of a scalar output into every node. Nodes are
//! visited in reverse creation order (inputs always precede consumers), and
//! each contribution is added the moment it is produced, so gradients are
//! bitwise deterministic.
//!
//! The op set is deliberately small: elementwise arithmetic with suffix
//! broadcasting, matrix multiply, transpose/reshape/concat/slice, softmax and
//! layer normalization over the last axis, tanh-approximation GELU, masked
//! mean, scalar scale, and an escape hatch ([`Graph::custom_scalar`]) for
//! scalar objectives whose analytic gradient is supplied by the caller.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Input,
    Add(NodeId, NodeId),
    AddBroadcast(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulBroadcast(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows {
        input: NodeId,
        start: usize,
        len: usize,
    },
    SliceCols {
        input: NodeId,
        start: usize,
        len: usize,
    },
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    Gelu(NodeId),
    MaskedMean {
        x: NodeId,
        mask: Vec<bool>,
        count: usize,
    },
    Scale {
        x: NodeId,
        factor: f64,
    },
    CustomScalar {
        x: NodeId,
        grad: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Vec<f64>,
    /// Cached per-row (mean, inv_std) for layer norm backward.
    aux: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

// ---------------------------------------------------------------------------
// Dense matrix kernels. `a` is [m, k] row-major throughout. Every kernel
// accumulates with the axpy pattern (independent output elements, ascending
// contraction index), so results are bitwise identical between the scalar
// and the runtime-dispatched AVX2 paths: wider lanes never change the
// per-element operation order.
// ---------------------------------------------------------------------------

#[inline(always)]
fn mm_nn_impl(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn mm_nn_avx2(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    mm_nn_impl(a, m, k, b, n, out)
}

/// C = A B with A [m,k], B [k,n].
pub(crate) fn mm_nn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        unsafe { mm_nn_avx2(a, m, k, b, n, &mut out) };
        return out;
    }
    mm_nn_impl(a, m, k, b, n, &mut out);
    out
}

/// C = A Bᵀ with A [m,k], B [n,k]. Materializes Bᵀ so the contraction runs
/// in the same axpy pattern (and order) as [`mm_nn`].
fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut bt = vec![0.0; k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    mm_nn(a, m, k, &bt, n)
}

#[inline(always)]
fn mm_tn_acc_impl(a: &[f64], m: usize, k: usize, c: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn mm_tn_acc_avx2(a: &[f64], m: usize, k: usize, c: &[f64], n: usize, out: &mut [f64]) {
    mm_tn_acc_impl(a, m, k, c, n, out)
}

/// out += Aᵀ C with A [m,k], C [m,n], out [k,n].
fn mm_tn_acc(a: &[f64], m: usize, k: usize, c: &[f64], n: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        unsafe { mm_tn_acc_avx2(a, m, k, c, n, out) };
        return;
    }
    mm_tn_acc_impl(a, m, k, c, n, out);
}

fn gelu_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// rhs broadcasts over lhs when its shape equals a suffix of lhs's shape.
fn suffix_broadcast(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() < lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

/// Disjoint borrows: node `a`'s value alongside node `b`'s gradient.
fn value_and_grad_mut(nodes: &mut [Node], a: usize, b: usize) -> (&[f64], &mut Vec<f64>) {
    debug_assert_ne!(a, b);
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (lo[a].value.data(), &mut hi[0].grad)
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        (hi[0].value.data(), &mut lo[b].grad)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by the last [`Graph::backward`] call.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: Vec::new(),
            aux: Vec::new(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    fn shape_err(&self, what: &str, a: NodeId, b: NodeId) -> Error {
        Error::validation(format!(
            "{what}: incompatible shapes {:?} and {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let data: Vec<f64> = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect();
            let t = Tensor::new(sa.to_vec(), data)?;
            Ok(self.push(Op::Add(a, b), t))
        } else if suffix_broadcast(sa, sb) {
            let bl = self.value(b).len();
            let data: Vec<f64> = self
                .value(a)
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + self.value(b).data()[i % bl])
                .collect();
            let t = Tensor::new(sa.to_vec(), data)?;
            Ok(self.push(Op::AddBroadcast(a, b), t))
        } else {
            Err(self.shape_err("add", a, b))
        }
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("sub", a, b));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let data: Vec<f64> = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x * y)
                .collect();
            let t = Tensor::new(sa.to_vec(), data)?;
            Ok(self.push(Op::Mul(a, b), t))
        } else if suffix_broadcast(sa, sb) {
            let bl = self.value(b).len();
            let data: Vec<f64> = self
                .value(a)
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x * self.value(b).data()[i % bl])
                .collect();
            let t = Tensor::new(sa.to_vec(), data)?;
            Ok(self.push(Op::MulBroadcast(a, b), t))
        } else {
            Err(self.shape_err("mul", a, b))
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = mm_nn(self.value(a).data(), m, k, self.value(b).data(), n);
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        if sa.len() != 2 {
            return Err(Error::validation(format!(
                "transpose: expected rank-2, got {:?}",
                sa
            )));
        }
        let (m, n) = (sa[0], sa[1]);
        let src = self.value(a).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, m], data)?;
        Ok(self.push(Op::Transpose(a), t))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != self.value(a).len() {
            return Err(Error::validation(format!(
                "reshape: {:?} incompatible with {:?}",
                self.value(a).shape(),
                shape
            )));
        }
        let t = Tensor::new(shape, self.value(a).data().to_vec())?;
        Ok(self.push(Op::Reshape(a), t))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::validation("concat_rows: no inputs".to_string()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[1] != cols {
                return Err(Error::validation(format!(
                    "concat_rows: expected [*, {cols}], got {s:?}"
                )));
            }
            rows += s[0];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), t))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::validation("concat_cols: no inputs".to_string()));
        }
        let rows = self.value(parts[0]).shape()[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(Error::validation(format!(
                    "concat_cols: expected [{rows}, *], got {s:?}"
                )));
            }
            cols += s[1];
        }
        let mut data = vec![0.0; rows * cols];
        let mut off = 0;
        for &p in parts {
            let pc = self.value(p).shape()[1];
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * cols + off..r * cols + off + pc]
                    .copy_from_slice(&src[r * pc..(r + 1) * pc]);
            }
            off += pc;
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), t))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.value(a).shape();
        if s.len() != 2 || start + len > s[0] {
            return Err(Error::validation(format!(
                "slice_rows: [{start}, {start}+{len}) out of {s:?}"
            )));
        }
        let cols = s[1];
        let data = self.value(a).data()[start * cols..(start + len) * cols].to_vec();
        let t = Tensor::new(vec![len, cols], data)?;
        Ok(self.push(Op::SliceRows { input: a, start, len }, t))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.value(a).shape();
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::validation(format!(
                "slice_cols: [{start}, {start}+{len}) out of {s:?}"
            )));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut data = vec![0.0; rows * len];
        for r in 0..rows {
            data[r * len..(r + 1) * len]
                .copy_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(Op::SliceCols { input: a, start, len }, t))
    }

    /// Softmax over the last axis, numerically stabilized by row-max
    /// subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (rows, cols) = (self.value(a).rows(), self.value(a).cols());
        let src = self.value(a).data();
        let mut data = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut sum = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Softmax(a), t))
    }

    /// Layer normalization over the last axis with learned gain and bias,
    /// eps = 1e-5.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let cols = self.value(x).cols();
        if self.value(gain).shape() != [cols] || self.value(bias).shape() != [cols] {
            return Err(Error::validation(format!(
                "layer_norm: gain/bias must be [{cols}], got {:?} and {:?}",
                self.value(gain).shape(),
                self.value(bias).shape()
            )));
        }
        let rows = self.value(x).rows();
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut data = vec![0.0; src.len()];
        let mut aux = Vec::with_capacity(rows * 2);
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let out = &mut data[r * cols..(r + 1) * cols];
            for c in 0..cols {
                out[c] = (row[c] - mean) * inv_std * g[c] + b[c];
            }
            aux.push(mean);
            aux.push(inv_std);
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        let id = self.push(Op::LayerNorm { x, gain, bias }, t);
        self.nodes[id.0].aux = aux;
        Ok(id)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.value(a).data().iter().map(|&x| gelu_scalar(x)).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Gelu(a), t))
    }

    /// Mean over the entries where `mask` is true. Scalar output.
    pub fn masked_mean(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        if mask.len() != self.value(a).len() {
            return Err(Error::validation(format!(
                "masked_mean: mask len {} vs tensor len {}",
                mask.len(),
                self.value(a).len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::validation(
                "masked_mean: mask selects no entries".to_string(),
            ));
        }
        let sum: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v)
            .sum();
        let t = Tensor::scalar(sum / count as f64);
        Ok(self.push(
            Op::MaskedMean {
                x: a,
                mask: mask.to_vec(),
                count,
            },
            t,
        ))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| x * factor).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(Op::Scale { x: a, factor }, t))
    }

    /// A scalar node whose value and gradient with respect to its input were
    /// computed by the caller. Used to attach analytic objectives to the tape.
    pub fn custom_scalar(&mut self, x: NodeId, value: f64, grad: Vec<f64>) -> Result<NodeId> {
        if grad.len() != self.value(x).len() {
            return Err(Error::validation(format!(
                "custom_scalar: gradient len {} vs input len {}",
                grad.len(),
                self.value(x).len()
            )));
        }
        Ok(self.push(Op::CustomScalar { x, grad }, Tensor::scalar(value)))
    }

    /// Convenience: x·W + b.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Accumulate exact adjoints of the scalar node `loss` into every node at
    /// or below it. Visits nodes in reverse creation order.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::validation(format!(
                "backward: output must be scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        for node in self.nodes.iter_mut().take(loss.0 + 1) {
            node.grad.clear();
            node.grad.resize(node.value.len(), 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let (left, right) = self.nodes.split_at_mut(i);
            let node = &right[0];
            if node.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Add(a, b) => {
                    for (g, &go) in left[a.0].grad.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                    for (g, &go) in left[b.0].grad.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                }
                Op::AddBroadcast(a, b) => {
                    for (g, &go) in left[a.0].grad.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                    let bl = left[b.0].grad.len();
                    for (i, &go) in node.grad.iter().enumerate() {
                        left[b.0].grad[i % bl] += go;
                    }
                }
                Op::Sub(a, b) => {
                    for (g, &go) in left[a.0].grad.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                    for (g, &go) in left[b.0].grad.iter_mut().zip(&node.grad) {
                        *g -= go;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    for i in 0..node.grad.len() {
                        let go = node.grad[i];
                        let av = left[a].value.data()[i];
                        let bv = left[b].value.data()[i];
                        left[a].grad[i] += go * bv;
                        left[b].grad[i] += go * av;
                    }
                }
                Op::MulBroadcast(a, b) => {
                    let (a, b) = (a.0, b.0);
                    let bl = left[b].value.len();
                    for i in 0..node.grad.len() {
                        let go = node.grad[i];
                        let av = left[a].value.data()[i];
                        let bv = left[b].value.data()[i % bl];
                        left[a].grad[i] += go * bv;
                        left[b].grad[i % bl] += go * av;
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    let m = left[a].value.shape()[0];
                    let k = left[a].value.shape()[1];
                    let n = left[b].value.shape()[1];
                    // dA = dC Bᵀ
                    let da = mm_nt(&node.grad, m, n, left[b].value.data(), k);
                    for (g, d) in left[a].grad.iter_mut().zip(da) {
                        *g += d;
                    }
                    // dB += Aᵀ dC; a and b are distinct nodes except for the
                    // degenerate x·x case, which needs a copy
                    if a != b {
                        let (av, bg) = value_and_grad_mut(left, a, b);
                        mm_tn_acc(av, m, k, &node.grad, n, bg);
                    } else {
                        let avals = left[a].value.data().to_vec();
                        mm_tn_acc(&avals, m, k, &node.grad, n, &mut left[b].grad);
                    }
                }
                Op::Transpose(a) => {
                    let a = a.0;
                    let (n, m) = (node.value.shape()[0], node.value.shape()[1]);
                    for i in 0..n {
                        for j in 0..m {
                            left[a].grad[j * n + i] += node.grad[i * m + j];
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (g, &go) in left[a.0].grad.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = left[p.0].grad.len();
                        for (g, &go) in left[p.0].grad.iter_mut().zip(&node.grad[off..off + len]) {
                            *g += go;
                        }
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.shape()[0];
                    let cols = node.value.shape()[1];
                    let mut off = 0;
                    for &p in parts {
                        let pc = left[p.0].value.shape()[1];
                        for r in 0..rows {
                            for c in 0..pc {
                                left[p.0].grad[r * pc + c] += node.grad[r * cols + off + c];
                            }
                        }
                        off += pc;
                    }
                }
                Op::SliceRows { input, start, len } => {
                    let cols = node.value.shape()[1];
                    let dst = &mut left[input.0].grad[start * cols..(start + len) * cols];
                    for (g, &go) in dst.iter_mut().zip(&node.grad) {
                        *g += go;
                    }
                }
                Op::SliceCols { input, start, len } => {
                    let rows = node.value.shape()[0];
                    let len = *len;
                    let cols = left[input.0].value.shape()[1];
                    for r in 0..rows {
                        for c in 0..len {
                            left[input.0].grad[r * cols + start + c] += node.grad[r * len + c];
                        }
                    }
                }
                Op::Softmax(a) => {
                    let a = a.0;
                    let rows = node.value.rows();
                    let cols = node.value.cols();
                    for r in 0..rows {
                        let y = &node.value.data()[r * cols..(r + 1) * cols];
                        let dy = &node.grad[r * cols..(r + 1) * cols];
                        let dot: f64 = y.iter().zip(dy).map(|(yi, di)| yi * di).sum();
                        let dst = &mut left[a].grad[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dst[c] += y[c] * (dy[c] - dot);
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (x, gain, bias) = (x.0, gain.0, bias.0);
                    let rows = node.value.rows();
                    let cols = node.value.cols();
                    for r in 0..rows {
                        let mean = node.aux[r * 2];
                        let inv_std = node.aux[r * 2 + 1];
                        let xs = &left[x].value.data()[r * cols..(r + 1) * cols];
                        let dy = &node.grad[r * cols..(r + 1) * cols];
                        let g = left[gain].value.data();
                        // dxhat_c = dy_c * g_c; xhat_c = (x_c - mean) * inv_std
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for c in 0..cols {
                            let xhat = (xs[c] - mean) * inv_std;
                            let dxhat = dy[c] * g[c];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        let n = cols as f64;
                        for c in 0..cols {
                            let xhat = (xs[c] - mean) * inv_std;
                            let dxhat = dy[c] * g[c];
                            left[x].grad[r * cols + c] += inv_std
                                * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                            left[gain].grad[c] += dy[c] * xhat;
                            left[bias].grad[c] += dy[c];
                        }
                    }
                }
                Op::Gelu(a) => {
                    let a = a.0;
                    for i in 0..node.grad.len() {
                        let x = left[a].value.data()[i];
                        left[a].grad[i] += node.grad[i] * gelu_deriv(x);
                    }
                }
                Op::MaskedMean { x, mask, count } => {
                    let go = node.grad[0] / *count as f64;
                    for (g, &m) in left[x.0].grad.iter_mut().zip(mask) {
                        if m {
                            *g += go;
                        }
                    }
                }
                Op::Scale { x, factor } => {
                    for (g, &go) in left[x.0].grad.iter_mut().zip(&node.grad) {
                        *g += go * factor;
                    }
                }
                Op::CustomScalar { x, grad } => {
                    let go = node.grad[0];
                    for (g, &d) in left[x.0].grad.iter_mut().zip(grad) {
                        *g += go * d;
                    }
                }
            }
        }
        Ok(())
    }
}
