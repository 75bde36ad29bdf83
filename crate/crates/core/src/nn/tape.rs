//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse insertion order, which is a valid topological
//! order because operands always precede their results.

use super::params::{ParamId, ParamStore};
use super::tensor::{ordered_sum, Tensor};
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f64 = 1e-5;
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
    Min,
    Std,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat(Vec<Var>),
    Reshape(Var),
    ExpandI(Var),
    ExpandJ(Var),
    ExpandRows(Var),
    Transpose01(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    ReduceRows {
        x: Var,
        kind: Reduce,
        mask: Option<Vec<bool>>,
        /// Selected row per column for max/min.
        picks: Vec<usize>,
    },
    SumAll(Var),
    CrossEntropy {
        probs: Var,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`, or zeros if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor {
                shape,
                data: g.clone(),
            },
            None => Tensor::zeros(&shape),
        }
    }

    /// Parameter gradients in tape order; a parameter used twice appears twice.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, Tensor)> + '_ {
        self.params.iter().map(|&(id, v)| (id, self.get(v)))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    consumed: bool,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// `(outer, len, inner)` split of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// A leaf value; its gradient is available after backward.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (&self.value(a).data, &self.value(b).data);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            Op::MatMul(a, b),
        ))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err(op, &ta.shape, &tb.shape));
        }
        Ok(Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x * c).collect(),
        };
        self.push(t, Op::Scale(a, c))
    }

    /// Adds a `[d]` bias to every length-`d` row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let d = tx.last_dim();
        if tb.shape != [d] || tx.rank() == 0 {
            return Err(shape_err("add_bias", &tx.shape, &tb.shape));
        }
        let mut data = tx.data.clone();
        for row in data.chunks_mut(d) {
            for (v, bb) in row.iter_mut().zip(&tb.data) {
                *v += bb;
            }
        }
        let t = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        Ok(self.push(t, Op::AddBias(x, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let t = Tensor {
            shape: tx.shape.clone(),
            data: tx.data.iter().map(|&v| v.max(0.0)).collect(),
        };
        self.push(t, Op::Relu(x))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(shape_err("softmax", &tx.shape, &[axis]));
        }
        let (outer, len, inner) = axis_split(&tx.shape, axis);
        let mut out = vec![0.0; tx.len()];
        let mut buf = Vec::with_capacity(len);
        for o in 0..outer {
            for r in 0..inner {
                let idx = |l: usize| (o * len + l) * inner + r;
                let max = (0..len).map(|l| tx.data[idx(l)]).fold(f64::NEG_INFINITY, f64::max);
                buf.clear();
                for l in 0..len {
                    let e = (tx.data[idx(l)] - max).exp();
                    out[idx(l)] = e;
                    buf.push(e);
                }
                let z = ordered_sum(&mut buf);
                for l in 0..len {
                    out[idx(l)] /= z;
                }
            }
        }
        let t = Tensor {
            shape: tx.shape.clone(),
            data: out,
        };
        Ok(self.push(t, Op::Softmax { x, axis }))
    }

    /// Normalizes each row over the last axis, then applies `γ ⊙ x̂ + β`.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.last_dim();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] || tx.rank() == 0 {
            return Err(shape_err("layernorm", &tx.shape, self.shape(gamma)));
        }
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let rows = tx.len() / d.max(1);
        let mut xhat = vec![0.0; tx.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std[r] = is;
            for k in 0..d {
                let h = (row[k] - mean) * is;
                xhat[r * d + k] = h;
                out[r * d + k] = h * g[k] + b[k];
            }
        }
        let t = Tensor {
            shape: tx.shape.clone(),
            data: out,
        };
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Concatenates along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::arg("concat of nothing"))?;
        let lead = self.shape(*first)[..self.shape(*first).len().saturating_sub(1)].to_vec();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat", self.shape(*first), s));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor { shape, data }, Op::Concat(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let t = Tensor::new(shape.to_vec(), tx.data.clone())
            .map_err(|_| shape_err("reshape", &tx.shape, shape))?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    fn expand_pairs(&mut self, x: Var, by_row: bool) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(shape_err("expand", &tx.shape, &[]));
        }
        let (n, d) = (tx.shape[0], tx.shape[1]);
        let mut data = Vec::with_capacity(n * n * d);
        for i in 0..n {
            for j in 0..n {
                let src = if by_row { i } else { j };
                data.extend_from_slice(&tx.data[src * d..(src + 1) * d]);
            }
        }
        let t = Tensor {
            shape: vec![n, n, d],
            data,
        };
        let op = if by_row { Op::ExpandI(x) } else { Op::ExpandJ(x) };
        Ok(self.push(t, op))
    }

    /// `[n, d] → [n, n, d]` with `out[i, j] = x[i]`.
    pub fn expand_i(&mut self, x: Var) -> Result<Var> {
        self.expand_pairs(x, true)
    }

    /// `[n, d] → [n, n, d]` with `out[i, j] = x[j]`.
    pub fn expand_j(&mut self, x: Var) -> Result<Var> {
        self.expand_pairs(x, false)
    }

    /// `[d] → [m, d]`.
    pub fn expand_rows(&mut self, x: Var, m: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 1 {
            return Err(shape_err("expand_rows", &tx.shape, &[m]));
        }
        let d = tx.shape[0];
        let data = tx.data.repeat(m);
        Ok(self.push(
            Tensor {
                shape: vec![m, d],
                data,
            },
            Op::ExpandRows(x),
        ))
    }

    /// Swaps the first two axes.
    pub fn transpose01(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() < 2 {
            return Err(shape_err("transpose01", &tx.shape, &[]));
        }
        let (p, q) = (tx.shape[0], tx.shape[1]);
        let inner: usize = tx.shape[2..].iter().product();
        let mut data = vec![0.0; tx.len()];
        for i in 0..p {
            for j in 0..q {
                let src = (i * q + j) * inner;
                let dst = (j * p + i) * inner;
                data[dst..dst + inner].copy_from_slice(&tx.data[src..src + inner]);
            }
        }
        let mut shape = tx.shape.clone();
        shape.swap(0, 1);
        Ok(self.push(Tensor { shape, data }, Op::Transpose01(x)))
    }

    /// Sums out `axis` with order-independent summation.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(shape_err("sum_axis", &tx.shape, &[axis]));
        }
        let (outer, len, inner) = axis_split(&tx.shape, axis);
        let mut data = vec![0.0; outer * inner];
        let mut buf = vec![0.0; len];
        for o in 0..outer {
            for r in 0..inner {
                for l in 0..len {
                    buf[l] = tx.data[(o * len + l) * inner + r];
                }
                data[o * inner + r] = ordered_sum(&mut buf);
            }
        }
        let mut shape = tx.shape.clone();
        shape.remove(axis);
        Ok(self.push(Tensor { shape, data }, Op::SumAxis { x, axis }))
    }

    /// Column-wise reduction of `[m, d]` over the rows selected by `mask`.
    /// `Std` is the population standard deviation; empty selections give 0.
    pub fn reduce_rows(&mut self, x: Var, kind: Reduce, mask: Option<Vec<bool>>) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(shape_err("reduce_rows", &tx.shape, &[]));
        }
        let (m, d) = (tx.shape[0], tx.shape[1]);
        if let Some(mk) = &mask {
            if mk.len() != m {
                return Err(shape_err("reduce_rows", &tx.shape, &[mk.len()]));
            }
        }
        let rows: Vec<usize> = (0..m)
            .filter(|&r| mask.as_ref().is_none_or(|mk| mk[r]))
            .collect();
        let count = rows.len() as f64;
        let mut data = vec![0.0; d];
        let mut picks = vec![usize::MAX; d];
        let mut buf = Vec::with_capacity(rows.len());
        for c in 0..d {
            if rows.is_empty() {
                continue;
            }
            buf.clear();
            buf.extend(rows.iter().map(|&r| tx.data[r * d + c]));
            data[c] = match kind {
                Reduce::Sum => ordered_sum(&mut buf),
                Reduce::Mean => ordered_sum(&mut buf) / count,
                Reduce::Std => {
                    let mean = ordered_sum(&mut buf) / count;
                    for v in buf.iter_mut() {
                        *v = (*v - mean).powi(2);
                    }
                    (ordered_sum(&mut buf) / count).sqrt()
                }
                Reduce::Max | Reduce::Min => {
                    let mut best = rows[0];
                    for &r in &rows[1..] {
                        let (v, b) = (tx.data[r * d + c], tx.data[best * d + c]);
                        if (kind == Reduce::Max && v > b) || (kind == Reduce::Min && v < b) {
                            best = r;
                        }
                    }
                    picks[c] = best;
                    tx.data[best * d + c]
                }
            };
        }
        Ok(self.push(
            Tensor {
                shape: vec![d],
                data,
            },
            Op::ReduceRows {
                x,
                kind,
                mask,
                picks,
            },
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let mut buf = self.value(x).data.clone();
        let s = ordered_sum(&mut buf);
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// `−Σ_r w_r Σ_c t_rc log max(p_rc, 1e-12)` for probabilities `[m, c]`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &Tensor, weights: &[f64]) -> Result<Var> {
        let tp = self.value(probs);
        if tp.rank() != 2 || targets.shape != tp.shape || weights.len() != tp.shape[0] {
            return Err(shape_err("cross_entropy", &tp.shape, &targets.shape));
        }
        let c = tp.shape[1];
        let mut terms = Vec::new();
        for (r, &w) in weights.iter().enumerate() {
            for k in 0..c {
                let t = targets.data[r * c + k];
                if t != 0.0 && w != 0.0 {
                    terms.push(-w * t * tp.data[r * c + k].max(LOG_CLAMP).ln());
                }
            }
        }
        let loss = ordered_sum(&mut terms);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs,
                targets: targets.data.clone(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Backpropagates from the scalar `loss`. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Autodiff("backward already ran on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let len_of = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                accumulate(&mut grads[a.0], m * k, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &tb.data[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                accumulate(&mut grads[b.0], k * n, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = ta.data[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += x * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    accumulate(&mut grads[v.0], g.len(), |buf| {
                        buf.iter_mut().zip(g).for_each(|(x, y)| *x += y)
                    });
                }
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += y)
                });
                accumulate(&mut grads[b.0], g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x -= y)
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.value(*a).data, &self.value(*b).data);
                accumulate(&mut grads[a.0], g.len(), |buf| {
                    for k in 0..g.len() {
                        buf[k] += g[k] * tb[k];
                    }
                });
                accumulate(&mut grads[b.0], g.len(), |buf| {
                    for k in 0..g.len() {
                        buf[k] += g[k] * ta[k];
                    }
                });
            }
            Op::Scale(a, c) => {
                accumulate(&mut grads[a.0], g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)
                });
            }
            Op::AddBias(x, b) => {
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(p, q)| *p += q)
                });
                let d = len_of(*b);
                accumulate(&mut grads[b.0], d, |buf| {
                    for row in g.chunks(d) {
                        buf.iter_mut().zip(row).for_each(|(p, q)| *p += q);
                    }
                });
            }
            Op::Relu(x) => {
                let tx = &self.value(*x).data;
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    for k in 0..g.len() {
                        if tx[k] > 0.0 {
                            buf[k] += g[k];
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = &node.value;
                let (outer, len, inner) = axis_split(&y.shape, *axis);
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    for o in 0..outer {
                        for r in 0..inner {
                            let idx = |l: usize| (o * len + l) * inner + r;
                            let dot: f64 = (0..len).map(|l| g[idx(l)] * y.data[idx(l)]).sum();
                            for l in 0..len {
                                buf[idx(l)] += y.data[idx(l)] * (g[idx(l)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gm = &self.value(*gamma).data;
                let d = gm.len();
                let rows = g.len() / d.max(1);
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    for r in 0..rows {
                        let gh: Vec<f64> = (0..d).map(|k| g[r * d + k] * gm[k]).collect();
                        let s1: f64 = gh.iter().sum();
                        let s2: f64 = (0..d).map(|k| gh[k] * xhat[r * d + k]).sum();
                        for k in 0..d {
                            buf[r * d + k] += inv_std[r] / d as f64
                                * (d as f64 * gh[k] - s1 - xhat[r * d + k] * s2);
                        }
                    }
                });
                accumulate(&mut grads[gamma.0], d, |buf| {
                    for r in 0..rows {
                        for k in 0..d {
                            buf[k] += g[r * d + k] * xhat[r * d + k];
                        }
                    }
                });
                accumulate(&mut grads[beta.0], d, |buf| {
                    for r in 0..rows {
                        for k in 0..d {
                            buf[k] += g[r * d + k];
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = node.value.last_dim();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).last_dim();
                    accumulate(&mut grads[p.0], rows * w, |buf| {
                        for r in 0..rows {
                            for k in 0..w {
                                buf[r * w + k] += g[r * total + offset + k];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Reshape(x) => {
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    buf.iter_mut().zip(g).for_each(|(p, q)| *p += q)
                });
            }
            Op::ExpandI(x) | Op::ExpandJ(x) => {
                let by_row = matches!(node.op, Op::ExpandI(_));
                let (n, d) = (node.value.shape[0], node.value.shape[2]);
                accumulate(&mut grads[x.0], n * d, |buf| {
                    for i in 0..n {
                        for j in 0..n {
                            let dst = if by_row { i } else { j };
                            for k in 0..d {
                                buf[dst * d + k] += g[(i * n + j) * d + k];
                            }
                        }
                    }
                });
            }
            Op::ExpandRows(x) => {
                let d = node.value.shape[1];
                accumulate(&mut grads[x.0], d, |buf| {
                    for row in g.chunks(d) {
                        buf.iter_mut().zip(row).for_each(|(p, q)| *p += q);
                    }
                });
            }
            Op::Transpose01(x) => {
                let (q, p) = (node.value.shape[0], node.value.shape[1]);
                let inner: usize = node.value.shape[2..].iter().product();
                accumulate(&mut grads[x.0], g.len(), |buf| {
                    for i in 0..p {
                        for j in 0..q {
                            let src = (j * p + i) * inner;
                            let dst = (i * q + j) * inner;
                            for k in 0..inner {
                                buf[dst + k] += g[src + k];
                            }
                        }
                    }
                });
            }
            Op::SumAxis { x, axis } => {
                let shape = &self.value(*x).shape;
                let (outer, len, inner) = axis_split(shape, *axis);
                accumulate(&mut grads[x.0], outer * len * inner, |buf| {
                    for o in 0..outer {
                        for l in 0..len {
                            for r in 0..inner {
                                buf[(o * len + l) * inner + r] += g[o * inner + r];
                            }
                        }
                    }
                });
            }
            Op::ReduceRows {
                x,
                kind,
                mask,
                picks,
            } => {
                let tx = self.value(*x);
                let (m, d) = (tx.shape[0], tx.shape[1]);
                let rows: Vec<usize> = (0..m)
                    .filter(|&r| mask.as_ref().is_none_or(|mk| mk[r]))
                    .collect();
                if rows.is_empty() {
                    return;
                }
                let count = rows.len() as f64;
                let out = &node.value.data;
                accumulate(&mut grads[x.0], m * d, |buf| {
                    for c in 0..d {
                        match kind {
                            Reduce::Sum => rows.iter().for_each(|&r| buf[r * d + c] += g[c]),
                            Reduce::Mean => rows.iter().for_each(|&r| buf[r * d + c] += g[c] / count),
                            Reduce::Max | Reduce::Min => buf[picks[c] * d + c] += g[c],
                            Reduce::Std => {
                                let sd = out[c];
                                if sd > 0.0 {
                                    let mean = rows.iter().map(|&r| tx.data[r * d + c]).sum::<f64>() / count;
                                    for &r in &rows {
                                        buf[r * d + c] += g[c] * (tx.data[r * d + c] - mean) / (count * sd);
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let n = len_of(*x);
                accumulate(&mut grads[x.0], n, |buf| buf.iter_mut().for_each(|p| *p += g[0]));
            }
            Op::CrossEntropy {
                probs,
                targets,
                weights,
            } => {
                let tp = self.value(*probs);
                let c = tp.shape[1];
                accumulate(&mut grads[probs.0], tp.len(), |buf| {
                    for (r, &w) in weights.iter().enumerate() {
                        for k in 0..c {
                            let (t, p) = (targets[r * c + k], tp.data[r * c + k]);
                            if t != 0.0 && p > LOG_CLAMP {
                                buf[r * c + k] -= g[0] * w * t / p;
                            }
                        }
                    }
                });
            }
        }
    }
}
