use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Transformer,
    Tft,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lstm, ModelKind::Transformer, ModelKind::Tft];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Transformer => "transformer",
            ModelKind::Tft => "tft",
        }
    }

    /// Whether the model emits quantiles rather than a single point value.
    pub fn is_quantile(self) -> bool {
        !matches!(self, ModelKind::Lstm)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(ModelKind::Lstm),
            "transformer" => Ok(ModelKind::Transformer),
            "tft" => Ok(ModelKind::Tft),
            other => Err(Error::Unsupported(other.to_string())),
        }
    }
}

/// Source of the decoder cross-attention operands.
///
/// `Conventional`: queries from the decoder stream, keys and values from the
/// encoder output. `Paper`: queries and keys from the encoder output (the
/// final encoder position queries), values from the decoder stream repeated
/// over the encoder positions. With a single decoder step the `Paper` values
/// are identical across keys, so the block output cannot depend on the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossAttentionWiring {
    Paper,
    Conventional,
}

pub const DEFAULT_QUANTILES: [f64; 7] = [0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub model_kind: ModelKind,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub n_decoder_blocks: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub tft_hidden: usize,
    pub tft_lstm_layers: usize,
    pub dropout: f64,
    pub quantiles: Vec<f64>,
    pub lookback: usize,
    pub horizon: usize,
    pub cross_attention_wiring: CrossAttentionWiring,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Tft,
            d_model: 16,
            n_heads: 4,
            n_encoder_blocks: 2,
            n_decoder_blocks: 3,
            lstm_layers: 3,
            lstm_hidden: 10,
            tft_hidden: 16,
            tft_lstm_layers: 1,
            dropout: 0.1,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            lookback: 365,
            horizon: 1,
            cross_attention_wiring: CrossAttentionWiring::Conventional,
        }
    }
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            model_kind: kind,
            ..Self::default()
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.quantiles.is_empty() {
            problems.push("quantiles must not be empty".to_string());
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            problems.push(format!("quantiles {:?} must lie in (0, 1)", self.quantiles));
        }
        if self.quantiles.windows(2).any(|w| w[1] <= w[0]) {
            problems.push(format!(
                "quantiles {:?} must be strictly increasing",
                self.quantiles
            ));
        }
        if self.horizon != 1 {
            problems.push(format!("horizon must be 1, got {}", self.horizon));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.lookback < 2 {
            problems.push(format!(
                "lookback must be at least 2, got {}",
                self.lookback
            ));
        }
        match self.model_kind {
            ModelKind::Lstm => {
                if self.lstm_layers == 0 || self.lstm_hidden == 0 {
                    problems.push("lstm_layers and lstm_hidden must be positive".into());
                }
            }
            ModelKind::Transformer => {
                if self.n_heads == 0 || self.d_model % self.n_heads.max(1) != 0 {
                    problems.push(format!(
                        "d_model {} must be divisible by n_heads {}",
                        self.d_model, self.n_heads
                    ));
                }
                if self.d_model < 2 || self.d_model % 2 != 0 {
                    problems.push(format!(
                        "d_model {} must be even and at least 2",
                        self.d_model
                    ));
                }
                if self.n_encoder_blocks == 0 || self.n_decoder_blocks == 0 {
                    problems.push("encoder and decoder block counts must be positive".into());
                }
            }
            ModelKind::Tft => {
                if self.n_heads == 0 || self.tft_hidden % self.n_heads.max(1) != 0 {
                    problems.push(format!(
                        "tft_hidden {} must be divisible by n_heads {}",
                        self.tft_hidden, self.n_heads
                    ));
                }
                if self.tft_hidden < 2 {
                    problems.push(format!("tft_hidden {} must be at least 2", self.tft_hidden));
                }
                if self.tft_lstm_layers == 0 {
                    problems.push("tft_lstm_layers must be positive".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Width of the model output: one point value or one value per quantile.
    pub fn output_width(&self) -> usize {
        if self.model_kind.is_quantile() {
            self.quantiles.len()
        } else {
            1
        }
    }

    /// Index of the 0.5 quantile, used as the point forecast.
    pub fn median_index(&self) -> Option<usize> {
        self.quantiles.iter().position(|q| (q - 0.5).abs() < 1e-12)
    }
}

/// Input counts fixed at build time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    /// Dynamic forcing variables, excluding the target.
    pub n_dynamic: usize,
    pub n_static: usize,
    /// Known-future variables for the forecast step.
    pub n_known: usize,
}

impl InputDims {
    /// Past-observed variables: the forcings plus the target.
    pub fn n_past(&self) -> usize {
        self.n_dynamic + 1
    }
}
