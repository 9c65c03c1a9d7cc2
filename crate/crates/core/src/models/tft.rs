use rand::Rng;

use super::{Batch, InputDims, ModelConfig};
use crate::autograd::{ParamStore, Tensor, Var};
use crate::error::Result;
use crate::nn::{
    AttentionMask, GateAddNorm, Graph, Grn, Linear, Lstm, LstmCell, LstmState, MultiHeadAttention,
    StaticCovariateEncoder, VariableEmbedding, VariableSelection,
};

/// Graph nodes produced alongside the TFT forecast.
#[derive(Clone, Debug)]
pub struct TftNodes {
    /// `[B, n_quantiles]`.
    pub output: Var,
    /// `[B, n_static]`.
    pub static_weights: Option<Var>,
    /// `[B, lookback, n_past]`.
    pub past_weights: Var,
    /// `[B, 1, n_known]`.
    pub future_weights: Var,
    /// Per head, `[B, Q, lookback + 1]` where `Q` is 1 on the forecast path
    /// and `lookback + 1` when every position queries.
    pub attention: Vec<Var>,
    /// Attention block output before gating, `[B, Q, d]`.
    pub attention_output: Var,
}

#[derive(Clone, Debug)]
pub struct TftForecaster {
    pub static_embedding: Option<VariableEmbedding>,
    pub static_selection: Option<VariableSelection>,
    pub static_encoder: StaticCovariateEncoder,
    pub past_embedding: VariableEmbedding,
    pub past_selection: VariableSelection,
    pub future_embedding: VariableEmbedding,
    pub future_selection: VariableSelection,
    pub encoder: Lstm,
    pub decoder: Lstm,
    pub lstm_gate: GateAddNorm,
    pub enrichment: Grn,
    pub attention: MultiHeadAttention,
    pub attention_gate: GateAddNorm,
    pub position_wise: Grn,
    pub output_gate: GateAddNorm,
    pub head: Linear,
    pub hidden: usize,
}

impl TftForecaster {
    pub fn new(
        store: &mut ParamStore,
        config: &ModelConfig,
        dims: &InputDims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = config.tft_hidden;
        let p = config.dropout;
        let (static_embedding, static_selection) = if dims.n_static > 0 {
            (
                Some(VariableEmbedding::new(
                    store,
                    "static.embed",
                    dims.n_static,
                    d,
                    rng,
                )),
                Some(VariableSelection::new(
                    store,
                    "static.select",
                    dims.n_static,
                    d,
                    None,
                    p,
                    rng,
                )?),
            )
        } else {
            (None, None)
        };
        let static_encoder = StaticCovariateEncoder::new(store, "static.context", d, p, rng)?;
        let past_embedding = VariableEmbedding::new(store, "past.embed", dims.n_past(), d, rng);
        let past_selection =
            VariableSelection::new(store, "past.select", dims.n_past(), d, Some(d), p, rng)?;
        let future_embedding = VariableEmbedding::new(store, "future.embed", dims.n_known, d, rng);
        let future_selection =
            VariableSelection::new(store, "future.select", dims.n_known, d, Some(d), p, rng)?;
        let layers = config.tft_lstm_layers;
        Ok(Self {
            static_embedding,
            static_selection,
            static_encoder,
            past_embedding,
            past_selection,
            future_embedding,
            future_selection,
            encoder: Lstm::new(store, "encoder", d, d, layers, rng)?,
            decoder: Lstm::new(store, "decoder", d, d, layers, rng)?,
            lstm_gate: GateAddNorm::new(store, "lstm.gate", d, d, p, rng)?,
            enrichment: Grn::new(store, "enrichment", d, d, d, Some(d), p, rng)?,
            attention: MultiHeadAttention::new(store, "attention", d, config.n_heads, rng)?,
            attention_gate: GateAddNorm::new(store, "attention.gate", d, d, p, rng)?,
            position_wise: Grn::new(store, "position_wise", d, d, d, None, p, rng)?,
            output_gate: GateAddNorm::new(store, "output.gate", d, d, 0.0, rng)?,
            head: Linear::new(store, "head", d, config.quantiles.len(), rng),
            hidden: d,
        })
    }

    /// Closed-form scalar count; no term depends on the lookback.
    pub fn num_params(config: &ModelConfig, dims: &InputDims) -> usize {
        let d = config.tft_hidden;
        let layers = config.tft_lstm_layers;
        let statics = if dims.n_static > 0 {
            VariableEmbedding::num_params(dims.n_static, d)
                + VariableSelection::num_params(dims.n_static, d, None)
        } else {
            0
        };
        statics
            + StaticCovariateEncoder::num_params(d)
            + VariableEmbedding::num_params(dims.n_past(), d)
            + VariableSelection::num_params(dims.n_past(), d, Some(d))
            + VariableEmbedding::num_params(dims.n_known, d)
            + VariableSelection::num_params(dims.n_known, d, Some(d))
            + 2 * layers * LstmCell::num_params(d, d)
            + 3 * GateAddNorm::num_params(d, d)
            + Grn::num_params(d, d, d, Some(d))
            + MultiHeadAttention::num_params(d)
            + Grn::num_params(d, d, d, None)
            + (d * config.quantiles.len() + config.quantiles.len())
    }

    /// Runs the full pipeline. With `all_queries`, every position attends
    /// under a causal mask; otherwise only the forecast position queries.
    pub fn forward(&self, g: &mut Graph, batch: &Batch, all_queries: bool) -> Result<TftNodes> {
        let b = batch.len();
        let d = self.hidden;

        // Static covariates → ζ → four contexts.
        let (zeta, static_weights) = match (
            &self.static_embedding,
            &self.static_selection,
            &batch.statics,
        ) {
            (Some(embed), Some(select), Some(statics)) => {
                let s = g.constant(statics.clone());
                let xs = embed.forward(g, s)?;
                let (zeta, w) = select.forward(g, &xs, None)?;
                (zeta, Some(w))
            }
            _ => (g.constant(Tensor::zeros(&[b, d])), None),
        };
        let ctx = self.static_encoder.forward(g, zeta)?;

        // Temporal variable selection.
        let past = g.constant(batch.past_inputs());
        let lookback = g.shape(past)[1];
        let xs = self.past_embedding.forward(g, past)?;
        let (past_sel, past_weights) = self.past_selection.forward(g, &xs, Some(ctx.c_s))?;
        let future = g.constant(batch.future_inputs());
        let xs = self.future_embedding.forward(g, future)?;
        let (future_sel, future_weights) = self.future_selection.forward(g, &xs, Some(ctx.c_s))?;

        // Sequence-to-sequence LSTM seeded with the static state.
        let init = vec![
            LstmState {
                h: ctx.c_h,
                c: ctx.c_c
            };
            self.encoder.cells.len()
        ];
        let (enc_out, enc_final) = self.encoder.forward(g, past_sel, Some(&init))?;
        let (dec_out, _) = self.decoder.forward(g, future_sel, Some(&enc_final))?;
        let lstm_out = g.concat(&[enc_out, dec_out], 1)?;
        let selected = g.concat(&[past_sel, future_sel], 1)?;
        let temporal = self.lstm_gate.forward(g, lstm_out, selected)?;

        // Static enrichment and temporal self-attention.
        let enriched = self.enrichment.forward(g, temporal, Some(ctx.c_e))?;
        let positions = lookback + 1;
        let (query, mask, residual, skip) = if all_queries {
            (
                enriched,
                AttentionMask::causal(positions),
                enriched,
                temporal,
            )
        } else {
            let q = g.slice(enriched, 1, lookback..positions)?;
            let skip = g.slice(temporal, 1, lookback..positions)?;
            (q, AttentionMask::causal_suffix(1, positions), q, skip)
        };
        let (attended, attention) =
            self.attention
                .forward(g, query, enriched, enriched, Some(&mask))?;
        let gated = self.attention_gate.forward(g, attended, residual)?;
        let refined = self.position_wise.forward(g, gated, None)?;
        let fused = self.output_gate.forward(g, refined, skip)?;

        let last = if all_queries {
            g.slice(fused, 1, lookback..positions)?
        } else {
            fused
        };
        let out = self.head.forward(g, last)?;
        let q = g.shape(out)[2];
        let output = g.reshape(out, &[b, q])?;
        Ok(TftNodes {
            output,
            static_weights,
            past_weights,
            future_weights,
            attention,
            attention_output: attended,
        })
    }
}
