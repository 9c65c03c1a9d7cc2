use rand::Rng;

use super::{Graph, Linear};
use crate::autograd::{ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Additive score for masked positions: a finite stand-in for −∞ that keeps
/// gradients free of NaN.
pub const MASK_FILL: f64 = -1e9;

/// Boolean `[L_q × L_k]` mask; `true` hides a key from a query.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    masked: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, masked: Vec<bool>) -> Result<Self> {
        if masked.len() != rows * cols {
            return Err(Error::shape(
                "attention mask",
                &[masked.len()],
                &[rows, cols],
            ));
        }
        if let Some(r) = (0..rows).find(|r| masked[r * cols..(r + 1) * cols].iter().all(|&m| m)) {
            return Err(Error::Contract(format!(
                "attention mask row {r} hides every key"
            )));
        }
        Ok(Self { rows, cols, masked })
    }

    /// Lower-triangular visibility over a sequence of length `len`.
    pub fn causal(len: usize) -> Self {
        Self::causal_suffix(len, len)
    }

    /// Causal mask for the last `queries` positions of a length-`keys`
    /// sequence: query `i` sits at position `keys − queries + i`.
    pub fn causal_suffix(queries: usize, keys: usize) -> Self {
        let offset = keys - queries.min(keys);
        let masked = (0..queries)
            .flat_map(|i| (0..keys).map(move |j| j > offset + i))
            .collect();
        Self {
            rows: queries,
            cols: keys,
            masked,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.masked[row * self.cols + col]
    }

    fn additive(&self) -> Tensor {
        let data = self
            .masked
            .iter()
            .map(|&m| if m { MASK_FILL } else { 0.0 })
            .collect();
        Tensor::new(vec![self.rows, self.cols], data).expect("mask shape")
    }
}

/// `softmax(QKᵀ/√d_k + mask)·V` for `[L, d]` or batched `[B, L, d]` inputs.
///
/// Returns the output and the post-softmax weights `[(B,) L_q, L_k]`.
pub fn scaled_dot_product_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&AttentionMask>,
) -> Result<(Var, Var)> {
    let (sq, sk, sv) = (
        g.shape(q).to_vec(),
        g.shape(k).to_vec(),
        g.shape(v).to_vec(),
    );
    let rank = sq.len();
    if !(rank == 2 || rank == 3) || sk.len() != rank || sv.len() != rank {
        return Err(Error::shape("attention", &sq, &sk));
    }
    if rank == 2 {
        let q3 = g.reshape(q, &[1, sq[0], sq[1]])?;
        let k3 = g.reshape(k, &[1, sk[0], sk[1]])?;
        let v3 = g.reshape(v, &[1, sv[0], sv[1]])?;
        let (out, w) = scaled_dot_product_attention(g, q3, k3, v3, mask)?;
        let out = g.reshape(out, &[sq[0], sv[1]])?;
        let w = g.reshape(w, &[sq[0], sk[0]])?;
        return Ok((out, w));
    }
    let (batch, lq, dk) = (sq[0], sq[1], sq[2]);
    let lk = sk[1];
    if sk[0] != batch || sk[2] != dk {
        return Err(Error::shape("attention keys", &sq, &sk));
    }
    if sv[0] != batch || sv[1] != lk {
        return Err(Error::shape("attention values", &sk, &sv));
    }
    let scores = g.bmm_nt(q, k)?;
    let mut scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
    if let Some(mask) = mask {
        if mask.rows != lq || mask.cols != lk {
            return Err(Error::shape(
                "attention mask",
                &[mask.rows, mask.cols],
                &[lq, lk],
            ));
        }
        let m = g.constant(mask.additive());
        scores = g.add(scores, m)?;
    }
    let weights = g.softmax(scores, 2)?;
    let out = g.bmm(weights, v)?;
    Ok((out, weights))
}

#[derive(Clone, Debug)]
pub struct AttentionHead {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
}

/// Per-head projections, per-head attention, concatenation and an output
/// linear layer.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: Vec<AttentionHead>,
    pub output: Linear,
    pub d_model: usize,
    pub d_k: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_heads == 0 || d_model == 0 || d_model % n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible into {n_heads} heads"
            )));
        }
        let d_k = d_model / n_heads;
        let heads = (0..n_heads)
            .map(|h| AttentionHead {
                wq: store.add_uniform(format!("{name}.h{h}.wq"), &[d_k, d_model], d_model, rng),
                wk: store.add_uniform(format!("{name}.h{h}.wk"), &[d_k, d_model], d_model, rng),
                wv: store.add_uniform(format!("{name}.h{h}.wv"), &[d_k, d_model], d_model, rng),
            })
            .collect();
        let output = Linear::new(store, &format!("{name}.out"), n_heads * d_k, d_model, rng);
        Ok(Self {
            heads,
            output,
            d_model,
            d_k,
        })
    }

    /// Scalar count; independent of the head count since `n·d_k = d_model`.
    pub fn num_params(d_model: usize) -> usize {
        4 * d_model * d_model + d_model
    }

    /// Inputs are `[L, d_model]` or `[B, L, d_model]`. Returns the projected
    /// output with the query shape and one weight matrix per head.
    pub fn forward(
        &self,
        g: &mut Graph,
        q_in: Var,
        k_in: Var,
        v_in: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<(Var, Vec<Var>)> {
        for x in [q_in, k_in, v_in] {
            if g.shape(x).last() != Some(&self.d_model) {
                return Err(Error::shape(
                    "multi-head attention",
                    g.shape(x),
                    &[self.d_model],
                ));
            }
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let wq = g.param(head.wq);
            let wk = g.param(head.wk);
            let wv = g.param(head.wv);
            let q = g.matmul_nt(q_in, wq)?;
            let k = g.matmul_nt(k_in, wk)?;
            let v = g.matmul_nt(v_in, wv)?;
            let (o, w) = scaled_dot_product_attention(g, q, k, v, mask)?;
            outs.push(o);
            weights.push(w);
        }
        let axis = g.shape(outs[0]).len() - 1;
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat(&outs, axis)?
        };
        Ok((self.output.forward(g, cat)?, weights))
    }
}
