use rand::Rng;

use super::{Batch, InputDims, ModelConfig};
use crate::autograd::{ParamStore, Var};
use crate::error::Result;
use crate::nn::{Graph, Linear, Lstm, LstmCell};

/// Stacked LSTM whose final top-layer state passes through
/// `linear → sigmoid → linear` to a single value.
#[derive(Clone, Debug)]
pub struct LstmForecaster {
    pub lstm: Lstm,
    pub head_hidden: Linear,
    pub head_out: Linear,
}

impl LstmForecaster {
    pub fn new(
        store: &mut ParamStore,
        config: &ModelConfig,
        dims: &InputDims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input = Self::input_width(dims);
        let h = config.lstm_hidden;
        Ok(Self {
            lstm: Lstm::new(store, "lstm", input, h, config.lstm_layers, rng)?,
            head_hidden: Linear::new(store, "head.hidden", h, h, rng),
            head_out: Linear::new(store, "head.out", h, 1, rng),
        })
    }

    pub fn input_width(dims: &InputDims) -> usize {
        dims.n_dynamic + 1 + dims.n_static
    }

    /// Closed-form scalar count.
    pub fn num_params(config: &ModelConfig, dims: &InputDims) -> usize {
        let (h, layers) = (config.lstm_hidden, config.lstm_layers);
        LstmCell::num_params(Self::input_width(dims), h)
            + (layers - 1) * LstmCell::num_params(h, h)
            + (h * h + h)
            + (h + 1)
    }

    /// Returns `[B, 1]`.
    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let x = g.constant(batch.lstm_inputs());
        let (_, finals) = self.lstm.forward(g, x, None)?;
        let top = finals.last().expect("at least one layer").h;
        let z = self.head_hidden.forward(g, top)?;
        let a = g.sigmoid(z);
        self.head_out.forward(g, a)
    }
}
