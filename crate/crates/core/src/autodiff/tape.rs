//! Operation tape and reverse pass.
//!
//! Nodes are appended in execution order, so the vector itself is a
//! topological order; the reverse pass walks it backwards once, which makes
//! gradient accumulation deterministic and repeatable bit-for-bit.
//!
//! Graph construction panics on shape misuse (programmer error). The only
//! runtime-checked entry point is [`Tape::backward`], which rejects
//! non-scalar seeds.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::fmath;

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// (m,k)·(k,n) -> (m,n)
    Matmul { a: TensorId, b: TensorId },
    /// (m,k)·(n,k)ᵀ -> (m,n)
    MatmulNt { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    /// (m,n) + broadcast row (n,)
    AddRow { a: TensorId, row: TensorId },
    Scale { a: TensorId, c: f64 },
    Exp { a: TensorId },
    Ln { a: TensorId },
    Tanh { a: TensorId },
    /// Row-wise stabilized softmax of a (m,n) matrix.
    RowSoftmax { a: TensorId },
    /// Fused stabilized log-softmax of a vector.
    LogSoftmax { a: TensorId },
    /// Per-row maximum of a (m,n) matrix; ties resolve to the first column.
    RowMax { a: TensorId, argmax: Vec<usize> },
    SumAll { a: TensorId },
    Dot { a: TensorId, b: TensorId },
    /// Row slice of a (m,n) matrix.
    Row { a: TensorId, index: usize },
    /// Scalar pick from a vector.
    Pick { a: TensorId, index: usize },
    /// Assemble scalars into a vector.
    StackScalars { parts: Vec<TensorId> },
    /// Row gather from a (v,d) table; repeated ids accumulate in backward.
    Gather { table: TensorId, ids: Vec<usize> },
    /// Row-wise layer normalization with learned gain and bias.
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of one forward computation.
#[derive(Debug, Default)]
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

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> TensorId {
        self.nodes.push(Node { op, value });
        TensorId(self.nodes.len() - 1)
    }

    /// Insert an input node (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> TensorId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.leaf(Tensor::scalar(value))
    }

    /// Copy a node's value into a fresh leaf, cutting the gradient path.
    pub fn detach(&mut self, id: TensorId) -> TensorId {
        let value = self.value(id).clone();
        self.leaf(value)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ta.data()[i * k + p];
                let brow = &tb.data()[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        self.push(Op::Matmul { a, b }, Tensor::matrix(m, n, out))
    }

    /// `a · bᵀ` for `a: (m,k)`, `b: (n,k)`.
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            for j in 0..n {
                let brow = tb.row(j);
                let mut acc = 0.0;
                for p in 0..k {
                    acc += arow[p] * brow[p];
                }
                out[i * n + j] = acc;
            }
        }
        self.push(Op::MatmulNt { a, b }, Tensor::matrix(m, n, out))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.elementwise(a, b, |x, y| x + y);
        self.push(Op::Add { a, b }, value)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.elementwise(a, b, |x, y| x - y);
        self.push(Op::Sub { a, b }, value)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let value = self.elementwise(a, b, |x, y| x * y);
        self.push(Op::Mul { a, b }, value)
    }

    fn elementwise(&self, a: TensorId, b: TensorId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, n) = (ta.rows(), ta.cols());
        assert_eq!(tr.shape(), [n], "add_row broadcast shape mismatch");
        let mut data = ta.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += tr.data()[j];
            }
        }
        self.push(Op::AddRow { a, row }, Tensor::matrix(m, n, data))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let ta = self.value(a);
        let value = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| c * x).collect());
        self.push(Op::Scale { a, c }, value)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let value = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| fmath::exp(x)).collect(),
        );
        self.push(Op::Exp { a }, value)
    }

    pub fn ln(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let value = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| fmath::ln(x)).collect(),
        );
        self.push(Op::Ln { a }, value)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let value = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| fmath::tanh(x)).collect(),
        );
        self.push(Op::Tanh { a }, value)
    }

    pub fn row_softmax(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        assert!(n > 0, "row_softmax on zero columns");
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = ta.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, fmath::fmax);
            let out = &mut data[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for j in 0..n {
                let e = fmath::exp(row[j] - max);
                out[j] = e;
                sum += e;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
        }
        self.push(Op::RowSoftmax { a }, Tensor::matrix(m, n, data))
    }

    /// Stabilized log-softmax of a vector: `x - max - ln(sum(exp(x - max)))`.
    pub fn log_softmax(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        assert_eq!(ta.shape().len(), 1, "log_softmax expects a vector");
        assert!(ta.numel() > 0, "log_softmax on empty vector");
        let value = Tensor::vector(super::func::log_softmax_slice(ta.data()));
        self.push(Op::LogSoftmax { a }, value)
    }

    pub fn row_max(&mut self, a: TensorId) -> TensorId {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        assert!(n > 0, "row_max on zero columns");
        let mut out = vec![0.0; m];
        let mut argmax = vec![0usize; m];
        for i in 0..m {
            let row = ta.row(i);
            let (mut best, mut best_j) = (row[0], 0usize);
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            out[i] = best;
            argmax[i] = best_j;
        }
        self.push(Op::RowMax { a, argmax }, Tensor::vector(out))
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll { a }, Tensor::scalar(total))
    }

    pub fn dot(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "dot shape mismatch");
        assert_eq!(ta.shape().len(), 1, "dot expects vectors");
        let mut acc = 0.0;
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            acc += x * y;
        }
        self.push(Op::Dot { a, b }, Tensor::scalar(acc))
    }

    pub fn row(&mut self, a: TensorId, index: usize) -> TensorId {
        let ta = self.value(a);
        assert!(index < ta.rows(), "row {index} out of {}", ta.rows());
        let value = Tensor::vector(ta.row(index).to_vec());
        self.push(Op::Row { a, index }, value)
    }

    pub fn pick(&mut self, a: TensorId, index: usize) -> TensorId {
        let ta = self.value(a);
        assert_eq!(ta.shape().len(), 1, "pick expects a vector");
        assert!(index < ta.numel(), "pick {index} out of {}", ta.numel());
        let value = Tensor::scalar(ta.data()[index]);
        self.push(Op::Pick { a, index }, value)
    }

    pub fn stack_scalars(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "stack_scalars on empty list");
        let data: Vec<f64> = parts.iter().map(|&p| self.value(p).item()).collect();
        self.push(
            Op::StackScalars {
                parts: parts.to_vec(),
            },
            Tensor::vector(data),
        )
    }

    /// Mean of a list of scalar nodes.
    pub fn mean_scalars(&mut self, parts: &[TensorId]) -> TensorId {
        let stacked = self.stack_scalars(parts);
        let sum = self.sum_all(stacked);
        self.scale(sum, 1.0 / parts.len() as f64)
    }

    pub fn gather(&mut self, table: TensorId, ids: &[usize]) -> TensorId {
        let tt = self.value(table);
        let (v, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < v, "gather id {id} out of table rows {v}");
            data.extend_from_slice(tt.row(id));
        }
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Tensor::matrix(ids.len(), d, data),
        )
    }

    /// Row-wise layer normalization: `gain ⊙ (x - μ)/σ + bias`.
    pub fn layer_norm(&mut self, x: TensorId, gain: TensorId, bias: TensorId) -> TensorId {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(tg.shape(), [n], "layer_norm gain shape");
        assert_eq!(tb.shape(), [n], "layer_norm bias shape");
        let mut normalized = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = tx.row(i);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / fmath::sqrt(var + LAYER_NORM_EPS);
            inv_std[i] = is;
            for j in 0..n {
                let nh = (row[j] - mean) * is;
                normalized[i * n + j] = nh;
                out[i * n + j] = tg.data()[j] * nh + tb.data()[j];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            Tensor::matrix(m, n, out),
        )
    }

    /// Reverse pass from a scalar seed node.
    ///
    /// Visits every node exactly once in reverse recording order, so repeated
    /// calls produce bit-identical gradients.
    pub fn backward(&self, seed: TensorId) -> Result<Gradients> {
        let seed_value = self.value(seed);
        if !seed_value.is_scalar() {
            return Err(Error::invalid_input(alloc::format!(
                "backward seed must be scalar, got shape {:?}",
                seed_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[seed.0] = Some(vec![1.0]);

        for idx in (0..=seed.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.accumulate_parents(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_parents(&self, idx: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                {
                    let ga = grad_buf(grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gy[i * n + j] * tb.data()[p * n + j];
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                }
                let gb = grad_buf(grads, *b, k * n);
                for p in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += ta.data()[i * k + p] * gy[i * n + j];
                        }
                        gb[p * n + j] += acc;
                    }
                }
            }
            Op::MatmulNt { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.rows();
                {
                    let ga = grad_buf(grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gy[i * n + j] * tb.data()[j * k + p];
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                }
                let gb = grad_buf(grads, *b, n * k);
                for j in 0..n {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += gy[i * n + j] * ta.data()[i * k + p];
                        }
                        gb[j * k + p] += acc;
                    }
                }
            }
            Op::Add { a, b } => {
                axpy(grad_buf(grads, *a, gy.len()), gy, 1.0);
                axpy(grad_buf(grads, *b, gy.len()), gy, 1.0);
            }
            Op::Sub { a, b } => {
                axpy(grad_buf(grads, *a, gy.len()), gy, 1.0);
                axpy(grad_buf(grads, *b, gy.len()), gy, -1.0);
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                {
                    let ga = grad_buf(grads, *a, gy.len());
                    for (i, g) in gy.iter().enumerate() {
                        ga[i] += g * tb.data()[i];
                    }
                }
                let gb = grad_buf(grads, *b, gy.len());
                for (i, g) in gy.iter().enumerate() {
                    gb[i] += g * ta.data()[i];
                }
            }
            Op::AddRow { a, row } => {
                let ta = self.value(*a);
                let (m, n) = (ta.rows(), ta.cols());
                axpy(grad_buf(grads, *a, m * n), gy, 1.0);
                let gr = grad_buf(grads, *row, n);
                for i in 0..m {
                    for j in 0..n {
                        gr[j] += gy[i * n + j];
                    }
                }
            }
            Op::Scale { a, c } => {
                axpy(grad_buf(grads, *a, gy.len()), gy, *c);
            }
            Op::Exp { a } => {
                let y = &node.value;
                let ga = grad_buf(grads, *a, gy.len());
                for (i, g) in gy.iter().enumerate() {
                    ga[i] += g * y.data()[i];
                }
            }
            Op::Ln { a } => {
                let ta = self.value(*a);
                let ga = grad_buf(grads, *a, gy.len());
                for (i, g) in gy.iter().enumerate() {
                    ga[i] += g / ta.data()[i];
                }
            }
            Op::Tanh { a } => {
                let y = &node.value;
                let ga = grad_buf(grads, *a, gy.len());
                for (i, g) in gy.iter().enumerate() {
                    let t = y.data()[i];
                    ga[i] += g * (1.0 - t * t);
                }
            }
            Op::RowSoftmax { a } => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let ga = grad_buf(grads, *a, m * n);
                for i in 0..m {
                    let yr = y.row(i);
                    let gr = &gy[i * n..(i + 1) * n];
                    let dotv: f64 = yr.iter().zip(gr).map(|(&p, &g)| p * g).sum();
                    for j in 0..n {
                        ga[i * n + j] += yr[j] * (gr[j] - dotv);
                    }
                }
            }
            Op::LogSoftmax { a } => {
                let y = &node.value;
                let n = y.numel();
                let gsum: f64 = gy.iter().sum();
                let ga = grad_buf(grads, *a, n);
                for j in 0..n {
                    ga[j] += gy[j] - fmath::exp(y.data()[j]) * gsum;
                }
            }
            Op::RowMax { a, argmax } => {
                let ta = self.value(*a);
                let n = ta.cols();
                let ga = grad_buf(grads, *a, ta.numel());
                for (i, &j) in argmax.iter().enumerate() {
                    ga[i * n + j] += gy[i];
                }
            }
            Op::SumAll { a } => {
                let numel = self.value(*a).numel();
                let ga = grad_buf(grads, *a, numel);
                for v in ga.iter_mut() {
                    *v += gy[0];
                }
            }
            Op::Dot { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                {
                    let ga = grad_buf(grads, *a, ta.numel());
                    for (i, v) in tb.data().iter().enumerate() {
                        ga[i] += gy[0] * v;
                    }
                }
                let gb = grad_buf(grads, *b, tb.numel());
                for (i, v) in ta.data().iter().enumerate() {
                    gb[i] += gy[0] * v;
                }
            }
            Op::Row { a, index } => {
                let ta = self.value(*a);
                let n = ta.cols();
                let ga = grad_buf(grads, *a, ta.numel());
                for j in 0..n {
                    ga[index * n + j] += gy[j];
                }
            }
            Op::Pick { a, index } => {
                let numel = self.value(*a).numel();
                let ga = grad_buf(grads, *a, numel);
                ga[*index] += gy[0];
            }
            Op::StackScalars { parts } => {
                for (i, part) in parts.iter().enumerate() {
                    grad_buf(grads, *part, 1)[0] += gy[i];
                }
            }
            Op::Gather { table, ids } => {
                let tt = self.value(*table);
                let d = tt.cols();
                let gt = grad_buf(grads, *table, tt.numel());
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt[id * d + j] += gy[r * d + j];
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let tx = self.value(*x);
                let tg = self.value(*gain);
                let (m, n) = (tx.rows(), tx.cols());
                {
                    let gg = grad_buf(grads, *gain, n);
                    for i in 0..m {
                        for j in 0..n {
                            gg[j] += gy[i * n + j] * normalized[i * n + j];
                        }
                    }
                }
                {
                    let gb = grad_buf(grads, *bias, n);
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += gy[i * n + j];
                        }
                    }
                }
                let gx = grad_buf(grads, *x, m * n);
                for i in 0..m {
                    let mut h_mean = 0.0;
                    let mut hx_mean = 0.0;
                    for j in 0..n {
                        let h = gy[i * n + j] * tg.data()[j];
                        h_mean += h;
                        hx_mean += h * normalized[i * n + j];
                    }
                    h_mean /= n as f64;
                    hx_mean /= n as f64;
                    for j in 0..n {
                        let h = gy[i * n + j] * tg.data()[j];
                        gx[i * n + j] +=
                            inv_std[i] * (h - h_mean - normalized[i * n + j] * hx_mean);
                    }
                }
            }
        }
    }
}

fn grad_buf(grads: &mut [Option<Vec<f64>>], id: TensorId, numel: usize) -> &mut Vec<f64> {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(vec![0.0; numel]);
    }
    slot.as_mut().expect("just initialized")
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient w.r.t. a node, or `None` if the seed does not depend on it.
    pub fn wrt(&self, id: TensorId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient w.r.t. a node, materializing zeros for untouched nodes.
    pub fn wrt_or_zeros(&self, id: TensorId, numel: usize) -> Vec<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![0.0; numel],
        }
    }
}
