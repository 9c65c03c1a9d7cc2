use rand::Rng;

use super::{Batch, CrossAttentionWiring, InputDims, ModelConfig};
use crate::autograd::{ParamStore, Tensor, Var};
use crate::error::Result;
use crate::nn::{positional_encoding, AttentionMask, Graph, LayerNorm, Linear, MultiHeadAttention};

/// Position-wise `Linear(d → 4d) → ReLU → Linear(4d → d)`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), d, 4 * d, rng),
            down: Linear::new(store, &format!("{name}.down"), 4 * d, d, rng),
        }
    }

    fn num_params(d: usize) -> usize {
        (d * 4 * d + 4 * d) + (4 * d * d + d)
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.relu(h);
        self.down.forward(g, h)
    }
}

/// `LayerNorm(x + dropout(sublayer))`.
fn add_norm(g: &mut Graph, norm: &LayerNorm, x: Var, sub: Var, dropout: f64) -> Result<Var> {
    let sub = g.dropout(sub, dropout)?;
    let sum = g.add(x, sub)?;
    norm.forward(g, sum)
}

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = config.d_model;
        Ok(Self {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.attn"),
                d,
                config.n_heads,
                rng,
            )?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d)?,
        })
    }

    fn num_params(d: usize) -> usize {
        MultiHeadAttention::num_params(d) + FeedForward::num_params(d) + 4 * d
    }

    fn forward(&self, g: &mut Graph, x: Var, mask: &AttentionMask, dropout: f64) -> Result<Var> {
        let (a, _) = self.attention.forward(g, x, x, x, Some(mask))?;
        let x = add_norm(g, &self.norm1, x, a, dropout)?;
        let f = self.ffn.forward(g, x)?;
        add_norm(g, &self.norm2, x, f, dropout)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub self_attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl DecoderBlock {
    fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (d, h) = (config.d_model, config.n_heads);
        Ok(Self {
            self_attention: MultiHeadAttention::new(store, &format!("{name}.self"), d, h, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d)?,
            cross_attention: MultiHeadAttention::new(store, &format!("{name}.cross"), d, h, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d)?,
        })
    }

    fn num_params(d: usize) -> usize {
        2 * MultiHeadAttention::num_params(d) + FeedForward::num_params(d) + 6 * d
    }

    fn forward(
        &self,
        g: &mut Graph,
        y: Var,
        memory: Var,
        wiring: CrossAttentionWiring,
        dropout: f64,
    ) -> Result<Var> {
        let (s, _) = self.self_attention.forward(g, y, y, y, None)?;
        let y = add_norm(g, &self.norm1, y, s, dropout)?;
        let (c, _) = match wiring {
            CrossAttentionWiring::Conventional => {
                self.cross_attention.forward(g, y, memory, memory, None)?
            }
            CrossAttentionWiring::Paper => {
                let shape = g.shape(memory).to_vec();
                let last = g.slice(memory, 1, shape[1] - 1..shape[1])?;
                let zeros = g.constant(Tensor::zeros(&shape));
                let values = g.add(zeros, y)?;
                self.cross_attention
                    .forward(g, last, memory, values, None)?
            }
        };
        let y = add_norm(g, &self.norm2, y, c, dropout)?;
        let f = self.ffn.forward(g, y)?;
        add_norm(g, &self.norm3, y, f, dropout)
    }
}

/// Encoder over the days before the forecast day, decoder over the forecast
/// day's forcings, linear map to the quantiles.
#[derive(Clone, Debug)]
pub struct TransformerForecaster {
    pub encoder_input: Linear,
    pub decoder_input: Linear,
    pub encoder: Vec<EncoderBlock>,
    pub decoder: Vec<DecoderBlock>,
    pub head: Linear,
    pub wiring: CrossAttentionWiring,
    pub dropout: f64,
    pub d_model: usize,
}

impl TransformerForecaster {
    pub fn new(
        store: &mut ParamStore,
        config: &ModelConfig,
        dims: &InputDims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = config.d_model;
        let encoder_input = Linear::new(store, "enc.input", dims.n_past() + dims.n_static, d, rng);
        let decoder_input = Linear::new(store, "dec.input", dims.n_dynamic + dims.n_static, d, rng);
        let encoder = (0..config.n_encoder_blocks)
            .map(|i| EncoderBlock::new(store, &format!("enc.{i}"), config, rng))
            .collect::<Result<_>>()?;
        let decoder = (0..config.n_decoder_blocks)
            .map(|i| DecoderBlock::new(store, &format!("dec.{i}"), config, rng))
            .collect::<Result<_>>()?;
        let head = Linear::new(store, "head", d, config.quantiles.len(), rng);
        Ok(Self {
            encoder_input,
            decoder_input,
            encoder,
            decoder,
            head,
            wiring: config.cross_attention_wiring,
            dropout: config.dropout,
            d_model: d,
        })
    }

    pub fn num_params(config: &ModelConfig, dims: &InputDims) -> usize {
        let d = config.d_model;
        let enc_in = dims.n_past() + dims.n_static;
        let dec_in = dims.n_dynamic + dims.n_static;
        (enc_in * d + d)
            + (dec_in * d + d)
            + config.n_encoder_blocks * EncoderBlock::num_params(d)
            + config.n_decoder_blocks * DecoderBlock::num_params(d)
            + (d * config.quantiles.len() + config.quantiles.len())
    }

    /// Encoder representations `[B, lookback − 1, d_model]`.
    pub fn encode(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let x = g.constant(batch.encoder_inputs());
        let steps = g.shape(x)[1];
        let x = self.encoder_input.forward(g, x)?;
        let pe = g.constant(positional_encoding(steps, self.d_model)?);
        let mut h = g.add(x, pe)?;
        let mask = AttentionMask::causal(steps);
        for block in &self.encoder {
            h = block.forward(g, h, &mask, self.dropout)?;
        }
        Ok(h)
    }

    /// Returns `[B, n_quantiles]`.
    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let memory = self.encode(g, batch)?;
        let steps = g.shape(memory)[1];
        let y = g.constant(batch.decoder_inputs());
        let y = self.decoder_input.forward(g, y)?;
        let pe = positional_encoding(steps + 1, self.d_model)?;
        let row = pe.data()[steps * self.d_model..].to_vec();
        let pe = g.constant(Tensor::vector(row));
        let mut y = g.add(y, pe)?;
        for block in &self.decoder {
            y = block.forward(g, y, memory, self.wiring, self.dropout)?;
        }
        let out = self.head.forward(g, y)?;
        let b = g.shape(out)[0];
        let q = g.shape(out)[2];
        g.reshape(out, &[b, q])
    }
}
