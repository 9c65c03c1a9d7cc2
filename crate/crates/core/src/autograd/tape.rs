use std::collections::HashMap;
use std::ops::Range;

use super::kernels::{axis_extents, counter_uniform, gemm, Broadcast, MatView};
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Elu,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        /// `b` stored as `[n × k]` and used transposed.
        b_t: bool,
        /// `b` carries its own batch dimension (otherwise shared).
        b_batched: bool,
    },
    Binary {
        op: ElementwiseOp,
        a: Var,
        b: Var,
        plan: Broadcast,
    },
    Scale {
        a: Var,
        factor: f64,
    },
    Activation {
        act: Activation,
        a: Var,
    },
    Softmax {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Standardize {
        a: Var,
        width: usize,
        inv_std: Vec<f64>,
    },
    Concat {
        parts: Vec<(Var, usize)>,
        outer: usize,
        inner: usize,
        total: usize,
    },
    Slice {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
        start: usize,
        count: usize,
    },
    Reshape {
        a: Var,
    },
    Transpose {
        a: Var,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Reduce {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
        mean: bool,
    },
    Dropout {
        a: Var,
        mask: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every operation's inputs precede
/// it and a reverse sweep visits each operation once. A tape is built for a
/// single forward pass and dropped afterwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    training: bool,
    seed: u64,
    step: u64,
    dropout_calls: u64,
}

impl Tape {
    /// Evaluation-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Self::default()
    }

    /// Training-mode tape. Dropout masks are keyed by `(seed, call index, step)`.
    pub fn training(seed: u64, step: u64) -> Self {
        Self {
            training: true,
            seed,
            step,
            ..Self::default()
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records an input that is not differentiated.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is wanted.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.variable(store.value(id).clone());
        self.params.insert(id, v);
        v
    }

    /// Parameter gradients from a backward pass, ordered by parameter id.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Vec<f64>)> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| grads.get(v).map(|g| (id, g.to_vec())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    // ---- linear algebra -------------------------------------------------

    /// `a[..., m, k] · b[k, n]`. Leading dims of `a` are treated as extra rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let k = sb[0];
        let n = sb[1];
        let m = self.value(a).numel() / k;
        let mut out_shape = sa.clone();
        *out_shape.last_mut().unwrap() = n;
        self.record_matmul(a, b, 1, m, k, n, false, false, out_shape)
    }

    /// `a[..., k] · w[n, k]ᵀ`, the linear-layer product.
    pub fn matmul_nt(&mut self, a: Var, w: Var) -> Result<Var> {
        let (sa, sw) = (self.shape(a).to_vec(), self.shape(w).to_vec());
        if sa.is_empty() || sw.len() != 2 || sa[sa.len() - 1] != sw[1] {
            return Err(Error::shape("matmul_nt", &sa, &sw));
        }
        let (n, k) = (sw[0], sw[1]);
        let m = self.value(a).numel() / k;
        let mut out_shape = sa.clone();
        *out_shape.last_mut().unwrap() = n;
        self.record_matmul(a, w, 1, m, k, n, true, false, out_shape)
    }

    /// Batched `a[B, m, k] · b[B, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", &sa, &sb));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        self.record_matmul(a, b, bt, m, k, n, false, true, vec![bt, m, n])
    }

    /// Batched `a[B, m, k] · b[B, n, k]ᵀ`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("bmm_nt", &sa, &sb));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[1]);
        self.record_matmul(a, b, bt, m, k, n, true, true, vec![bt, m, n])
    }

    #[allow(clippy::too_many_arguments)]
    fn record_matmul(
        &mut self,
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        b_t: bool,
        b_batched: bool,
        out_shape: Vec<usize>,
    ) -> Result<Var> {
        let mut out = vec![0.0; batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            let bview = if b_t {
                MatView::dense_t(n, k)
            } else {
                MatView::dense(k, n)
            };
            for i in 0..batch {
                let boff = if b_batched { i * k * n } else { 0 };
                gemm(
                    &av[i * m * k..(i + 1) * m * k],
                    MatView::dense(m, k),
                    &bv[boff..boff + k * n],
                    bview,
                    &mut out[i * m * n..(i + 1) * m * n],
                    0.0,
                );
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                b_t,
                b_batched,
            },
            rg,
        ))
    }

    // ---- elementwise ----------------------------------------------------

    /// Pointwise `a ∘ b`. `b` must broadcast to the shape of `a`
    /// (numpy rules: right-aligned dims equal or 1; a scalar always fits).
    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let plan =
            Broadcast::plan(&sa, &sb).ok_or_else(|| Error::shape("elementwise", &sa, &sb))?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; av.len()];
        match op {
            ElementwiseOp::Add => plan.for_each(av.len(), |i, j| out[i] = av[i] + bv[j]),
            ElementwiseOp::Sub => plan.for_each(av.len(), |i, j| out[i] = av[i] - bv[j]),
            ElementwiseOp::Mul => plan.for_each(av.len(), |i, j| out[i] = av[i] * bv[j]),
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(sa, out)?, Op::Binary { op, a, b, plan }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Scale { a, factor }, rg)
    }

    // ---- nonlinearities -------------------------------------------------

    pub fn activation(&mut self, act: Activation, a: Var) -> Var {
        let t = self.value(a);
        let f: fn(f64) -> f64 = match act {
            Activation::Sigmoid => sigmoid,
            Activation::Tanh => f64::tanh,
            Activation::Elu => |x| if x > 0.0 { x } else { x.exp_m1() },
            Activation::Relu => |x| if x > 0.0 { x } else { 0.0 },
        };
        let out = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Activation { act, a }, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.activation(Activation::Elu, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Index(format!(
                "softmax axis {axis} for shape {shape:?}"
            )));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let x = self.value(a).data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(x[base + j * inner]);
                }
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (x[base + j * inner] - max).exp();
                    out[base + j * inner] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[base + j * inner] /= sum;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Softmax {
                a,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    /// `(x − mean) / sqrt(var + eps)` over the last axis (population variance).
    pub fn standardize(&mut self, a: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let width = *shape
            .last()
            .ok_or_else(|| Error::Contract("standardize on a scalar".into()))?;
        let x = self.value(a).data();
        let rows = x.len() / width;
        let mut out = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in out[r * width..(r + 1) * width].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Standardize { a, width, inv_std },
            rg,
        ))
    }

    // ---- structural -----------------------------------------------------

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Index(format!(
                "concat axis {axis} for shape {base:?}"
            )));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_extents(&base, axis);
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        let mut meta = Vec::with_capacity(parts.len());
        for &p in parts {
            let len = self.shape(p)[axis];
            let src = self.value(p).data();
            for o in 0..outer {
                let dst = o * total * inner + offset * inner;
                out[dst..dst + len * inner]
                    .copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
            }
            meta.push((p, len));
            offset += len;
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: meta,
                outer,
                inner,
                total,
            },
            rg,
        ))
    }

    /// Elements `range` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, range: Range<usize>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || range.start >= range.end || range.end > shape[axis] {
            return Err(Error::Index(format!(
                "slice {range:?} on axis {axis} of shape {shape:?}"
            )));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let count = range.end - range.start;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            let s = o * len * inner + range.start * inner;
            out.extend_from_slice(&src[s..s + count * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = count;
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Slice {
                a,
                outer,
                len,
                inner,
                start: range.start,
                count,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape { a }, rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::Contract(format!("transpose of shape {shape:?}")));
        }
        let r = shape.len();
        let (rows, cols) = (shape[r - 2], shape[r - 1]);
        let batch = self.value(a).numel() / (rows * cols);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..batch {
            let o = b * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    out[o + j * rows + i] = src[o + i * cols + j];
                }
            }
        }
        let mut out_shape = shape;
        out_shape.swap(r - 2, r - 1);
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Transpose {
                a,
                batch,
                rows,
                cols,
            },
            rg,
        ))
    }

    fn reduce(&mut self, a: Var, axis: usize, mean: bool) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Index(format!(
                "reduce axis {axis} for shape {shape:?}"
            )));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let s = o * len * inner + j * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[s + i];
                }
            }
        }
        if mean {
            out.iter_mut().for_each(|x| *x /= len as f64);
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Reduce {
                a,
                outer,
                len,
                inner,
                mean,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce(a, axis, true)
    }

    /// Mean of every element, as a scalar.
    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let flat = self.reshape(a, &[n])?;
        self.mean(flat, 0)
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let flat = self.reshape(a, &[n])?;
        self.sum(flat, 0)
    }

    /// Inverted dropout. Identity on an evaluation tape or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !self.training || rate == 0.0 {
            return Ok(a);
        }
        let stream = self.dropout_calls;
        self.dropout_calls += 1;
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.numel() as u64)
            .map(|i| {
                if counter_uniform(self.seed, stream, self.step, i) < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let out = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout { a, mask }, rg))
    }

    // ---- reverse sweep --------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Zero-initialised gradient buffer of an input, or None if it needs none.
        let slot = |grads: &mut [Option<Vec<f64>>], v: Var| -> bool {
            if !nodes[v.0].requires_grad {
                return false;
            }
            if grads[v.0].is_none() {
                grads[v.0] = Some(vec![0.0; nodes[v.0].value.numel()]);
            }
            true
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                b_t,
                b_batched,
            } => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    // dA = dC · op(B)ᵀ
                    let view = if b_t {
                        MatView::dense(n, k)
                    } else {
                        MatView::dense_t(k, n)
                    };
                    for i in 0..batch {
                        let boff = if b_batched { i * k * n } else { 0 };
                        gemm(
                            &g[i * m * n..(i + 1) * m * n],
                            MatView::dense(m, n),
                            &bv[boff..boff + k * n],
                            view,
                            &mut ga[i * m * k..(i + 1) * m * k],
                            1.0,
                        );
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b.0].as_mut().unwrap();
                    for i in 0..batch {
                        let boff = if b_batched { i * k * n } else { 0 };
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        if b_t {
                            // dB[n×k] = dCᵀ · A
                            gemm(
                                gi,
                                MatView::dense_t(m, n),
                                ai,
                                MatView::dense(m, k),
                                &mut gb[boff..boff + k * n],
                                1.0,
                            );
                        } else {
                            // dB[k×n] = Aᵀ · dC
                            gemm(
                                ai,
                                MatView::dense_t(m, k),
                                gi,
                                MatView::dense(m, n),
                                &mut gb[boff..boff + k * n],
                                1.0,
                            );
                        }
                    }
                }
            }
            Op::Binary { op, a, b, plan } => {
                let (a, b) = (*a, *b);
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    match op {
                        ElementwiseOp::Add | ElementwiseOp::Sub => {
                            ga.iter_mut().zip(g).for_each(|(d, s)| *d += s)
                        }
                        ElementwiseOp::Mul => plan.for_each(g.len(), |i, j| ga[i] += g[i] * bv[j]),
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b.0].as_mut().unwrap();
                    match op {
                        ElementwiseOp::Add => plan.for_each(g.len(), |i, j| gb[j] += g[i]),
                        ElementwiseOp::Sub => plan.for_each(g.len(), |i, j| gb[j] -= g[i]),
                        ElementwiseOp::Mul => plan.for_each(g.len(), |i, j| gb[j] += g[i] * av[i]),
                    }
                }
            }
            &Op::Scale { a, factor } => {
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s * factor);
                }
            }
            &Op::Activation { act, a } => {
                if slot(grads, a) {
                    let x = nodes[a.0].value.data();
                    let y = node.value.data();
                    let ga = grads[a.0].as_mut().unwrap();
                    for i in 0..g.len() {
                        let d = match act {
                            Activation::Sigmoid => y[i] * (1.0 - y[i]),
                            Activation::Tanh => 1.0 - y[i] * y[i],
                            Activation::Elu => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    y[i] + 1.0
                                }
                            }
                            Activation::Relu => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                        ga[i] += g[i] * d;
                    }
                }
            }
            &Op::Softmax {
                a,
                outer,
                len,
                inner,
            } => {
                if slot(grads, a) {
                    let y = node.value.data();
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let dot: f64 = (0..len)
                                .map(|j| g[base + j * inner] * y[base + j * inner])
                                .sum();
                            for j in 0..len {
                                let p = base + j * inner;
                                ga[p] += y[p] * (g[p] - dot);
                            }
                        }
                    }
                }
            }
            Op::Standardize { a, width, inv_std } => {
                let (a, w) = (*a, *width);
                if slot(grads, a) {
                    let y = node.value.data();
                    let ga = grads[a.0].as_mut().unwrap();
                    for (r, is) in inv_std.iter().enumerate() {
                        let rows = r * w..(r + 1) * w;
                        let gr = &g[rows.clone()];
                        let yr = &y[rows.clone()];
                        let mg = gr.iter().sum::<f64>() / w as f64;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / w as f64;
                        for (j, d) in ga[rows].iter_mut().enumerate() {
                            *d += is * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                }
            }
            Op::Concat {
                parts,
                outer,
                inner,
                total,
            } => {
                let mut offset = 0;
                for &(p, len) in parts {
                    if slot(grads, p) {
                        let gp = grads[p.0].as_mut().unwrap();
                        for o in 0..*outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * len * inner;
                            for (d, s) in gp[dst..dst + len * inner]
                                .iter_mut()
                                .zip(&g[src..src + len * inner])
                            {
                                *d += s;
                            }
                        }
                    }
                    offset += len;
                }
            }
            &Op::Slice {
                a,
                outer,
                len,
                inner,
                start,
                count,
            } => {
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..outer {
                        let dst = o * len * inner + start * inner;
                        let src = o * count * inner;
                        for (d, s) in ga[dst..dst + count * inner]
                            .iter_mut()
                            .zip(&g[src..src + count * inner])
                        {
                            *d += s;
                        }
                    }
                }
            }
            &Op::Reshape { a } => {
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            &Op::Transpose {
                a,
                batch,
                rows,
                cols,
            } => {
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for b in 0..batch {
                        let o = b * rows * cols;
                        for i in 0..rows {
                            for j in 0..cols {
                                ga[o + i * cols + j] += g[o + j * rows + i];
                            }
                        }
                    }
                }
            }
            &Op::Reduce {
                a,
                outer,
                len,
                inner,
                mean,
            } => {
                if slot(grads, a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    let f = if mean { 1.0 / len as f64 } else { 1.0 };
                    for o in 0..outer {
                        for j in 0..len {
                            let dst = o * len * inner + j * inner;
                            for i in 0..inner {
                                ga[dst + i] += g[o * inner + i] * f;
                            }
                        }
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if slot(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for i in 0..g.len() {
                        ga[i] += g[i] * mask[i];
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
