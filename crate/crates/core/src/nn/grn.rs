use rand::Rng;

use super::{Graph, LayerNorm, Linear};
use crate::autograd::{ParamStore, Var};
use crate::error::{Error, Result};

/// Gated linear unit `σ(W₁x + b₁) ⊙ (W₂x + b₂)`.
#[derive(Clone, Debug)]
pub struct Glu {
    pub gate: Linear,
    pub value: Linear,
}

impl Glu {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            gate: Linear::new(store, &format!("{name}.w1"), d_in, d_out, rng),
            value: Linear::new(store, &format!("{name}.w2"), d_in, d_out, rng),
        }
    }

    pub fn num_params(d_in: usize, d_out: usize) -> usize {
        2 * (d_in * d_out + d_out)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let z = self.gate.forward(g, x)?;
        let gate = g.sigmoid(z);
        let value = self.value.forward(g, x)?;
        g.mul(gate, value)
    }
}

/// Gated residual network:
/// `η₂ = ELU(W₄a + W₅c + b₄)`, `η₁ = W₃η₂ + b₃`,
/// `out = LayerNorm(a′ + GLU(dropout(η₁)))`
/// where `a′` is `a` or its linear projection when the widths differ.
#[derive(Clone, Debug)]
pub struct Grn {
    pub input: Linear,
    pub context: Option<Linear>,
    pub hidden: Linear,
    pub glu: Glu,
    pub skip: Option<Linear>,
    pub norm: LayerNorm,
    pub dropout: f64,
    pub d_in: usize,
    pub d_out: usize,
}

impl Grn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        d_context: Option<usize>,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!(
                "dropout rate {dropout} not in [0, 1)"
            )));
        }
        let input = Linear::new(store, &format!("{name}.w4"), d_in, d_hidden, rng);
        let context = d_context
            .map(|dc| Linear::without_bias(store, &format!("{name}.w5"), dc, d_hidden, rng));
        let hidden = Linear::new(store, &format!("{name}.w3"), d_hidden, d_out, rng);
        let glu = Glu::new(store, &format!("{name}.glu"), d_out, d_out, rng);
        let skip =
            (d_in != d_out).then(|| Linear::new(store, &format!("{name}.skip"), d_in, d_out, rng));
        let norm = LayerNorm::new(store, &format!("{name}.norm"), d_out)?;
        Ok(Self {
            input,
            context,
            hidden,
            glu,
            skip,
            norm,
            dropout,
            d_in,
            d_out,
        })
    }

    pub fn num_params(
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        d_context: Option<usize>,
    ) -> usize {
        let skip = if d_in != d_out {
            d_in * d_out + d_out
        } else {
            0
        };
        (d_in * d_hidden + d_hidden)
            + d_context.map_or(0, |dc| dc * d_hidden)
            + (d_hidden * d_out + d_out)
            + Glu::num_params(d_out, d_out)
            + skip
            + 2 * d_out
    }

    /// `a` is `[..., d_in]`. A context `[B, d_c]` is broadcast over every
    /// middle axis of `a: [B, ..., d_in]`.
    pub fn forward(&self, g: &mut Graph, a: Var, c: Option<Var>) -> Result<Var> {
        let rank = g.shape(a).len();
        let mut eta2 = self.input.forward(g, a)?;
        match (&self.context, c) {
            (Some(w5), Some(c)) => {
                let c = expand_context(g, c, rank)?;
                let projected = w5.forward(g, c)?;
                eta2 = g.add(eta2, projected)?;
            }
            (None, None) => {}
            (None, Some(_)) => {
                return Err(Error::Contract(
                    "context passed to a context-free GRN".into(),
                ))
            }
            (Some(_), None) => {
                return Err(Error::Contract(
                    "context-accepting GRN called without context".into(),
                ))
            }
        }
        let eta2 = g.elu(eta2);
        let eta1 = self.hidden.forward(g, eta2)?;
        let eta1 = g.dropout(eta1, self.dropout)?;
        let gated = self.glu.forward(g, eta1)?;
        let residual = match &self.skip {
            Some(skip) => skip.forward(g, a)?,
            None => a,
        };
        let sum = g.add(residual, gated)?;
        self.norm.forward(g, sum)
    }
}

/// Inserts unit axes after the leading axis until `c` has `rank` axes.
fn expand_context(g: &mut Graph, c: Var, rank: usize) -> Result<Var> {
    let shape = g.shape(c).to_vec();
    if shape.len() >= rank || shape.len() < 2 {
        return Ok(c);
    }
    let mut expanded = vec![shape[0]];
    expanded.extend(std::iter::repeat(1).take(rank - shape.len()));
    expanded.extend_from_slice(&shape[1..]);
    g.reshape(c, &expanded)
}

/// `LayerNorm(residual + GLU(dropout(x)))`, the gated skip used around the
/// temporal blocks.
#[derive(Clone, Debug)]
pub struct GateAddNorm {
    pub glu: Glu,
    pub norm: LayerNorm,
    pub dropout: f64,
}

impl GateAddNorm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            glu: Glu::new(store, &format!("{name}.glu"), d_in, d_out, rng),
            norm: LayerNorm::new(store, &format!("{name}.norm"), d_out)?,
            dropout,
        })
    }

    pub fn num_params(d_in: usize, d_out: usize) -> usize {
        Glu::num_params(d_in, d_out) + 2 * d_out
    }

    pub fn forward(&self, g: &mut Graph, x: Var, residual: Var) -> Result<Var> {
        let x = g.dropout(x, self.dropout)?;
        let gated = self.glu.forward(g, x)?;
        let sum = g.add(residual, gated)?;
        self.norm.forward(g, sum)
    }
}
