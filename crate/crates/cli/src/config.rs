//! Run configuration files and the provenance stamped into every output.

use std::path::Path;

use flowcast::data::PipelineConfig;
use flowcast::models::{ModelConfig, ModelKind};
use flowcast::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a command can be configured with. Each section falls back to
/// its defaults; unknown keys are rejected.
///
/// `model.model_kind` is replaced by the model a command trains, and
/// `model.lookback` by the lookback the cache was windowed with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: PipelineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads a TOML file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| CliError::Usage(format!("invalid config: {}", e.message())))?;
        config.train.validate()?;
        Ok(config)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        self
    }

    /// The architecture for `kind` on a cache windowed with `lookback`.
    pub fn model_for(&self, kind: ModelKind, lookback: usize) -> CliResult<ModelConfig> {
        let config = ModelConfig {
            model_kind: kind,
            lookback,
            ..self.model.clone()
        };
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Provenance written into every output of a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub config: RunConfig,
}

impl RunRecord {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: config.train.seed,
            config_hash: config.hash(),
            code_version: CODE_VERSION.to_string(),
            config: config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse("[train]\nmax_epochs = 7\npatience = 2\n[data]\nlookback = 90\n")
            .unwrap();
        assert_eq!(c.train.max_epochs, 7);
        assert_eq!(c.data.lookback, 90);
        assert_eq!(c.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::parse("[train]\nlearning_rat = 0.1\n").unwrap_err();
        assert!(
            matches!(&err, CliError::Usage(m) if m.contains("learning_rat")),
            "{err}"
        );
        let err = RunConfig::parse("epochs = 3\n").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let err = RunConfig::parse("[train]\nmax_epochs = 3\npatience = 3\n").unwrap_err();
        assert_eq!(err.code(), 2);
    }

    #[test]
    fn hash_tracks_content_and_round_trips() {
        let a = RunConfig::default();
        let b = RunConfig::default().with_seed(Some(9));
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(RunConfig::parse(&b.to_toml()).unwrap(), b);
    }
}
