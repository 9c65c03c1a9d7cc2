//! The three forecasters and their shared plumbing: configuration, batch
//! layout, construction, inference and checkpoints.

mod batch;
mod config;
mod lstm;
mod tft;
mod transformer;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autograd::{ParamManifestEntry, ParamStore, Tape, Tensor, Var};
use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::nn::Graph;

pub use batch::Batch;
pub use config::{CrossAttentionWiring, InputDims, ModelConfig, ModelKind, DEFAULT_QUANTILES};
pub use lstm::LstmForecaster;
pub use tft::{TftForecaster, TftNodes};
pub use transformer::{DecoderBlock, EncoderBlock, FeedForward, TransformerForecaster};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TFX1";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Debug)]
pub enum Architecture {
    Lstm(LstmForecaster),
    Transformer(TransformerForecaster),
    Tft(TftForecaster),
}

/// Interpretability payload of a TFT forward pass, per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    /// `[B, n_static]`.
    pub static_weights: Option<Tensor>,
    /// `[B, lookback, n_past]`.
    pub past_weights: Tensor,
    /// `[B, 1, n_known]`.
    pub future_weights: Tensor,
    /// Head-averaged weights of the forecast position over all
    /// `lookback + 1` positions, `[B, lookback + 1]`.
    pub attention: Tensor,
}

/// Model output for a batch: `[B, 1]` for the LSTM, `[B, n_quantiles]`
/// otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastOutput {
    pub values: Tensor,
    pub diagnostics: Option<Diagnostics>,
}

/// Graph nodes of one forward pass.
pub struct Forward {
    pub output: Var,
    pub tft: Option<TftNodes>,
}

/// A built model: configuration, parameters and architecture.
#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub store: ParamStore,
    pub arch: Architecture,
}

/// Builds a model with parameters drawn from a ChaCha stream seeded by `seed`.
pub fn build_model(config: &ModelConfig, dims: InputDims, seed: u64) -> Result<Forecaster> {
    config.validate()?;
    if dims.n_dynamic == 0 {
        return Err(Error::Config(
            "at least one dynamic variable is required".into(),
        ));
    }
    if config.model_kind == ModelKind::Tft && dims.n_known == 0 {
        return Err(Error::Config(
            "the TFT needs at least one known-future variable".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let arch = match config.model_kind {
        ModelKind::Lstm => {
            Architecture::Lstm(LstmForecaster::new(&mut store, config, &dims, &mut rng)?)
        }
        ModelKind::Transformer => Architecture::Transformer(TransformerForecaster::new(
            &mut store, config, &dims, &mut rng,
        )?),
        ModelKind::Tft => {
            Architecture::Tft(TftForecaster::new(&mut store, config, &dims, &mut rng)?)
        }
    };
    Ok(Forecaster {
        config: config.clone(),
        dims,
        store,
        arch,
    })
}

impl Forecaster {
    pub fn kind(&self) -> ModelKind {
        self.config.model_kind
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Closed-form scalar count for a configuration.
    pub fn expected_num_params(config: &ModelConfig, dims: &InputDims) -> usize {
        match config.model_kind {
            ModelKind::Lstm => LstmForecaster::num_params(config, dims),
            ModelKind::Transformer => TransformerForecaster::num_params(config, dims),
            ModelKind::Tft => TftForecaster::num_params(config, dims),
        }
    }

    /// Records a forward pass using the parameter values in `store`, which
    /// must share this model's manifest.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
    ) -> Result<Forward> {
        batch.validate(&self.dims, self.config.lookback)?;
        let mut g = Graph::new(tape, store);
        match &self.arch {
            Architecture::Lstm(m) => Ok(Forward {
                output: m.forward(&mut g, batch)?,
                tft: None,
            }),
            Architecture::Transformer(m) => Ok(Forward {
                output: m.forward(&mut g, batch)?,
                tft: None,
            }),
            Architecture::Tft(m) => {
                let nodes = m.forward(&mut g, batch, false)?;
                Ok(Forward {
                    output: nodes.output,
                    tft: Some(nodes),
                })
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<Forward> {
        self.forward_with(tape, &self.store, batch)
    }

    /// Evaluation-mode forecast. Diagnostics are read from the same pass and
    /// are only available for the TFT.
    pub fn predict(&self, batch: &Batch, diagnostics: bool) -> Result<ForecastOutput> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, batch)?;
        let values = tape.value(fwd.output).clone();
        let diagnostics = match (&fwd.tft, diagnostics) {
            (Some(nodes), true) => Some(extract_diagnostics(&tape, nodes)?),
            _ => None,
        };
        Ok(ForecastOutput {
            values,
            diagnostics,
        })
    }

    /// TFT attention with every position querying under the causal mask;
    /// returns the attention block output `[B, lookback + 1, d]`.
    pub fn tft_attention_all_positions(&self, batch: &Batch) -> Result<(Tensor, Tensor)> {
        let Architecture::Tft(m) = &self.arch else {
            return Err(Error::Unsupported(format!(
                "{} has no temporal attention",
                self.kind()
            )));
        };
        batch.validate(&self.dims, self.config.lookback)?;
        let mut tape = Tape::new();
        let mut g = Graph::new(&mut tape, &self.store);
        let nodes = m.forward(&mut g, batch, true)?;
        Ok((
            g.value(nodes.attention_output).clone(),
            g.value(nodes.output).clone(),
        ))
    }

    /// Transformer encoder representations `[B, lookback − 1, d_model]`.
    pub fn transformer_encoding(&self, batch: &Batch) -> Result<Tensor> {
        let Architecture::Transformer(m) = &self.arch else {
            return Err(Error::Unsupported(format!(
                "{} has no encoder",
                self.kind()
            )));
        };
        batch.validate(&self.dims, self.config.lookback)?;
        let mut tape = Tape::new();
        let mut g = Graph::new(&mut tape, &self.store);
        let enc = m.encode(&mut g, batch)?;
        Ok(g.value(enc).clone())
    }

    /// Writes a checkpoint. `metadata` is stored verbatim in the header and
    /// must not contain wall-clock values if byte-stable files are wanted.
    pub fn save(&self, path: &Path, metadata: Value) -> Result<()> {
        let header = json!({
            "format_version": CHECKPOINT_VERSION,
            "config": self.config,
            "dims": self.dims,
            "manifest": self.store.manifest(),
            "metadata": metadata,
        });
        let values: Vec<&[f64]> = self
            .store
            .ids()
            .map(|id| self.store.value(id).data())
            .collect();
        write_container(path, CHECKPOINT_MAGIC, &header, &values)
    }

    /// Restores a checkpoint written by [`Forecaster::save`] and returns its
    /// metadata.
    pub fn load(path: &Path) -> Result<(Self, Value)> {
        let (header, arrays) = read_container(path, CHECKPOINT_MAGIC)?;
        let parsed: CheckpointHeader =
            serde_json::from_value(header).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("bad checkpoint header: {e}"),
            })?;
        if parsed.format_version != CHECKPOINT_VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                parsed.format_version
            )));
        }
        let mut model = build_model(&parsed.config, parsed.dims, 0)?;
        let manifest = model.store.manifest();
        if manifest != parsed.manifest || arrays.len() != manifest.len() {
            return Err(Error::Compatibility(
                "checkpoint parameter manifest does not match the configured architecture".into(),
            ));
        }
        let ids: Vec<_> = model.store.ids().collect();
        for (id, values) in ids.into_iter().zip(arrays) {
            let slot = model.store.value_mut(id);
            if slot.len() != values.len() {
                return Err(Error::Compatibility(format!(
                    "parameter `{}` has {} values, expected {}",
                    parsed.manifest[id.index()].name,
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        Ok((model, parsed.metadata))
    }
}

#[derive(Deserialize, Serialize)]
struct CheckpointHeader {
    format_version: u64,
    config: ModelConfig,
    dims: InputDims,
    manifest: Vec<ParamManifestEntry>,
    #[serde(default)]
    metadata: Value,
}

fn extract_diagnostics(tape: &Tape, nodes: &TftNodes) -> Result<Diagnostics> {
    let heads: Vec<&Tensor> = nodes.attention.iter().map(|v| tape.value(*v)).collect();
    let shape = heads[0].shape().to_vec();
    let (b, positions) = (shape[0], shape[2]);
    let mut avg = vec![0.0; b * positions];
    for h in &heads {
        for (a, v) in avg.iter_mut().zip(h.data()) {
            *a += v;
        }
    }
    let n = heads.len() as f64;
    avg.iter_mut().for_each(|a| *a /= n);
    Ok(Diagnostics {
        static_weights: nodes.static_weights.map(|v| tape.value(v).clone()),
        past_weights: tape.value(nodes.past_weights).clone(),
        future_weights: tape.value(nodes.future_weights).clone(),
        attention: Tensor::new(vec![b, positions], avg)?,
    })
}
