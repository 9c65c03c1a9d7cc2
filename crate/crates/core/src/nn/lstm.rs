use rand::Rng;

use super::Graph;
use crate::autograd::{ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM cell.
///
/// Gate blocks are stacked row-wise in the order input, forget, output,
/// candidate: `w` is `[4h × in]`, `u` is `[4h × h]` and `b` is `[4h]`, so rows
/// `k·h..(k+1)·h` hold the per-gate `W_k`, `U_k` and `b_k`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[4 * hidden, input], input, rng);
        let u = store.add_uniform(format!("{name}.u"), &[4 * hidden, hidden], hidden, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        let b = store.add(format!("{name}.b"), Tensor::vector(bias));
        Self {
            w,
            u,
            b,
            input,
            hidden,
        }
    }

    /// Scalar count: four gates of `W`, `U` and `b`.
    pub fn num_params(input: usize, hidden: usize) -> usize {
        4 * (hidden * input + hidden * hidden + hidden)
    }

    /// Input contribution `x·Wᵀ + b` for any leading shape `[..., in]`.
    pub fn project_input(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.input) {
            return Err(Error::shape("lstm input", g.shape(x), &[self.input]));
        }
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.matmul_nt(x, w)?;
        g.add(z, b)
    }

    /// One step from a pre-projected input `x·Wᵀ + b` of shape `[..., 4h]`.
    pub fn step_projected(&self, g: &mut Graph, zx: Var, prev: LstmState) -> Result<LstmState> {
        let h = self.hidden;
        if g.shape(prev.h).last() != Some(&h) || g.shape(prev.c) != g.shape(prev.h) {
            return Err(Error::shape("lstm state", g.shape(prev.h), g.shape(prev.c)));
        }
        let u = g.param(self.u);
        let zh = g.matmul_nt(prev.h, u)?;
        let z = g.add(zx, zh)?;
        let axis = g.shape(z).len() - 1;
        let zi = g.slice(z, axis, 0..h)?;
        let zf = g.slice(z, axis, h..2 * h)?;
        let zo = g.slice(z, axis, 2 * h..3 * h)?;
        let zg = g.slice(z, axis, 3 * h..4 * h)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let o = g.sigmoid(zo);
        let cand = g.tanh(zg);
        let keep = g.mul(f, prev.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// `(h_t, c_t)` from `x_t` and the previous state.
    pub fn step(&self, g: &mut Graph, x: Var, prev: LstmState) -> Result<LstmState> {
        let zx = self.project_input(g, x)?;
        self.step_projected(g, zx, prev)
    }
}

/// Stack of LSTM cells run over a `[B, T, F]` sequence.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub cells: Vec<LstmCell>,
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layers == 0 || hidden == 0 || input == 0 {
            return Err(Error::Config(format!(
                "lstm needs positive sizes (input {input}, hidden {hidden}, layers {layers})"
            )));
        }
        let cells = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmCell::new(store, &format!("{name}.l{l}"), inp, hidden, rng)
            })
            .collect();
        Ok(Self { cells })
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    /// Runs every layer over `x: [B, T, F]`; layer ℓ's hidden sequence feeds
    /// layer ℓ+1. `init` seeds every layer (zeros when absent).
    ///
    /// Returns the top layer's hidden sequence `[B, T, h]` and each layer's
    /// final state.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        init: Option<&[LstmState]>,
    ) -> Result<(Var, Vec<LstmState>)> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(Error::Contract(format!(
                "lstm expects [B, T, F], got {shape:?}"
            )));
        }
        let (batch, steps) = (shape[0], shape[1]);
        if let Some(init) = init {
            if init.len() != self.cells.len() {
                return Err(Error::Contract(format!(
                    "{} initial states for {} layers",
                    init.len(),
                    self.cells.len()
                )));
            }
        }
        let mut seq = x;
        let mut finals = Vec::with_capacity(self.cells.len());
        for (l, cell) in self.cells.iter().enumerate() {
            let h = cell.hidden;
            let zx = cell.project_input(g, seq)?;
            let mut state = match init {
                Some(states) => states[l],
                None => {
                    let h0 = g.constant(Tensor::zeros(&[batch, h]));
                    let c0 = g.constant(Tensor::zeros(&[batch, h]));
                    LstmState { h: h0, c: c0 }
                }
            };
            let mut outs = Vec::with_capacity(steps);
            for t in 0..steps {
                let zt = g.slice(zx, 1, t..t + 1)?;
                let zt = g.reshape(zt, &[batch, 4 * h])?;
                state = cell.step_projected(g, zt, state)?;
                outs.push(g.reshape(state.h, &[batch, 1, h])?);
            }
            seq = g.concat(&outs, 1)?;
            finals.push(state);
        }
        Ok((seq, finals))
    }
}
