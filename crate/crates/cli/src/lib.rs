//! Operator commands for the flowcast forecasters: synthesize or ingest
//! basins, train a model, evaluate and interpret a checkpoint, and compare
//! all three models across basins.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_ingest, cmd_interpret, cmd_synth, cmd_train, Comparison,
    IngestSummary, SampleSet, TrainOutput,
};
pub use config::{RunConfig, RunRecord, CODE_VERSION};
pub use error::{CliError, CliResult};
