//! Ingestion, screening, infilling, splitting, normalization and windowing
//! of per-basin daily records.

pub mod infill;
pub mod normalize;
pub mod pipeline;
pub mod record;
pub mod screen;
pub mod split;
pub mod synth;
pub mod window;

pub use infill::{infill, infill_series, NaturalSpline};
pub use normalize::{
    apply_normalization, fit_normalization, NormalizationSpec, StaticSpec, VarStats,
};
pub use pipeline::{
    build_dataset, load_records, prepare, timeseries_path, BasinStatus, Dataset, IngestEntry,
    PipelineConfig, ATTRIBUTES_FILE, TIMESERIES_DIR,
};
pub use record::{is_missing, list_basins, load_attributes, load_basin, BasinRecord, MISSING};
pub use screen::{screen_basin, Rejection, ScreenOutcome, MAX_GAP_DAYS, MIN_RECORD_DAYS};
pub use split::{split, SplitRanges, DEFAULT_RATIOS};
pub use synth::{generate, write_records, write_synthetic, SynthConfig};
pub use window::{known_feature_names, known_features, window, BasinDataset, SequenceSample};
