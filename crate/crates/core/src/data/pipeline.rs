use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::infill::infill;
use super::normalize::{apply_normalization, fit_normalization, NormalizationSpec, StaticSpec};
use super::record::{list_basins, load_basin, BasinRecord};
use super::screen::{screen_basin, Rejection, ScreenOutcome, MIN_RECORD_DAYS};
use super::split::{split, SplitRanges, DEFAULT_RATIOS};
use super::window::BasinDataset;
use crate::container::{read_container, write_container};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"TDX1";
pub const CACHE_FORMAT_VERSION: u32 = 1;

/// Name of the attributes table inside a data directory.
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
/// Directory holding one `<basin_id>.csv` per basin.
pub const TIMESERIES_DIR: &str = "timeseries";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub lookback: usize,
    pub ratios: (f64, f64, f64),
    pub min_days: usize,
    pub target_column: String,
    /// Adds day-of-year sine and cosine to the known-future inputs.
    pub calendar_features: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lookback: 365,
            ratios: DEFAULT_RATIOS,
            min_days: MIN_RECORD_DAYS,
            target_column: "streamflow".into(),
            calendar_features: false,
        }
    }
}

/// Every prepared basin plus the ingest outcome of every requested basin.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: PipelineConfig,
    pub statics: StaticSpec,
    pub basins: Vec<BasinDataset>,
    pub screening: Vec<IngestEntry>,
}

pub fn timeseries_path(timeseries_dir: &Path, basin_id: &str) -> PathBuf {
    timeseries_dir.join(format!("{basin_id}.csv"))
}

/// Outcome of ingesting one basin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BasinStatus {
    Accepted,
    Rejected {
        rejection: Rejection,
    },
    /// The basin's files could not be read or filled.
    Failed {
        message: String,
    },
}

impl BasinStatus {
    /// Short status label and the reason behind it, empty when accepted.
    pub fn describe(&self) -> (&'static str, String) {
        match self {
            BasinStatus::Accepted => ("accepted", String::new()),
            BasinStatus::Rejected { rejection } => ("rejected", rejection.to_string()),
            BasinStatus::Failed { message } => ("failed", message.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestEntry {
    pub basin_id: String,
    #[serde(flatten)]
    pub status: BasinStatus,
}

/// Loads, screens and infills the named basins (every basin of the
/// attributes table when `basin_ids` is empty). A basin whose files cannot
/// be read is reported and skipped; only an unreadable attributes table is
/// an error.
pub fn load_records(
    timeseries_dir: &Path,
    attributes: &Path,
    basin_ids: &[String],
    config: &PipelineConfig,
) -> Result<(Vec<BasinRecord>, Vec<IngestEntry>)> {
    let ids = if basin_ids.is_empty() {
        list_basins(attributes)?
    } else {
        basin_ids.to_vec()
    };
    let mut accepted = Vec::new();
    let mut entries = Vec::new();
    for id in ids {
        let status = match load_basin(
            &timeseries_path(timeseries_dir, &id),
            attributes,
            &id,
            &config.target_column,
        ) {
            Err(e) => BasinStatus::Failed {
                message: e.to_string(),
            },
            Ok(record) => match screen_basin(&record, config.min_days) {
                ScreenOutcome::Rejected(rejection) => BasinStatus::Rejected { rejection },
                ScreenOutcome::Accepted => match infill(&record) {
                    Ok(filled) => {
                        accepted.push(filled);
                        BasinStatus::Accepted
                    }
                    Err(e) => BasinStatus::Failed {
                        message: e.to_string(),
                    },
                },
            },
        };
        if status != BasinStatus::Accepted {
            info!("basin {id}: {status:?}");
        }
        entries.push(IngestEntry {
            basin_id: id,
            status,
        });
    }
    Ok((accepted, entries))
}

/// Splits, normalizes and windows screened, infilled records. Statics are
/// scaled across the given basins; each basin's dynamic scaling is fitted on
/// the rows its training samples can see.
pub fn prepare(
    records: &[BasinRecord],
    config: &PipelineConfig,
) -> Result<(StaticSpec, Vec<BasinDataset>)> {
    let static_names = records
        .first()
        .map(|r| r.static_names.clone())
        .unwrap_or_default();
    if let Some(r) = records.iter().find(|r| r.static_names != static_names) {
        return Err(Error::Compatibility(format!(
            "basin {} has different static attributes",
            r.basin_id
        )));
    }
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.statics.clone()).collect();
    let statics = StaticSpec::fit(&static_names, &rows);
    let mut basins = Vec::with_capacity(records.len());
    for record in records {
        let n = record
            .len()
            .checked_sub(config.lookback)
            .filter(|n| *n > 0)
            .ok_or_else(|| {
                Error::Config(format!(
                    "basin {}: {} days leave no samples after a {}-day lookback",
                    record.basin_id,
                    record.len(),
                    config.lookback
                ))
            })?;
        let splits = split(n, config.ratios)?;
        let spec = fit_normalization(record, 0..config.lookback + splits.train.end)?;
        let normalized = apply_normalization(record, &spec)?;
        basins.push(BasinDataset::from_normalized(
            &normalized,
            statics.names(),
            statics.apply(&record.static_names, &record.statics)?,
            config.lookback,
            config.calendar_features,
            splits,
            spec,
        )?);
    }
    Ok((statics, basins))
}

pub fn build_dataset(
    timeseries_dir: &Path,
    attributes: &Path,
    basin_ids: &[String],
    config: &PipelineConfig,
) -> Result<Dataset> {
    let (records, screening) = load_records(timeseries_dir, attributes, basin_ids, config)?;
    let (statics, basins) = prepare(&records, config)?;
    Ok(Dataset {
        config: config.clone(),
        statics,
        basins,
        screening,
    })
}

#[derive(Serialize, Deserialize)]
struct BasinHeader {
    basin_id: String,
    start: chrono::NaiveDate,
    dynamic_names: Vec<String>,
    target_name: String,
    static_names: Vec<String>,
    statics: Vec<f64>,
    splits: SplitRanges,
    normalization: NormalizationSpec,
}

impl Dataset {
    pub fn basin(&self, id: &str) -> Result<&BasinDataset> {
        self.basins
            .iter()
            .find(|b| b.basin_id == id)
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    /// Writes the dataset as a `TDX1` container, one array per basin.
    pub fn save(&self, path: &Path) -> Result<()> {
        let basins: Vec<BasinHeader> = self
            .basins
            .iter()
            .map(|b| BasinHeader {
                basin_id: b.basin_id.clone(),
                start: b.start,
                dynamic_names: b.dynamic_names.clone(),
                target_name: b.target_name.clone(),
                static_names: b.static_names.clone(),
                statics: b.statics.clone(),
                splits: b.splits.clone(),
                normalization: b.normalization.clone(),
            })
            .collect();
        let header = json!({
            "format_version": CACHE_FORMAT_VERSION,
            "config": self.config,
            "statics": self.statics,
            "screening": self.screening,
            "basins": basins,
        });
        let arrays: Vec<&[f64]> = self.basins.iter().map(|b| b.values.as_slice()).collect();
        write_container(path, CACHE_MAGIC, &header, &arrays)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, arrays) = read_container(path, CACHE_MAGIC)?;
        let format = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let version = header.get("format_version").and_then(Value::as_u64);
        if version != Some(u64::from(CACHE_FORMAT_VERSION)) {
            return Err(format(format!(
                "unsupported dataset format version {version:?}"
            )));
        }
        let field = |name: &str| {
            header
                .get(name)
                .cloned()
                .ok_or_else(|| format(format!("missing `{name}`")))
        };
        let config: PipelineConfig = serde_json::from_value(field("config")?)?;
        let statics: StaticSpec = serde_json::from_value(field("statics")?)?;
        let screening: Vec<IngestEntry> = serde_json::from_value(field("screening")?)?;
        let headers: Vec<BasinHeader> = serde_json::from_value(field("basins")?)?;
        if headers.len() != arrays.len() {
            return Err(format(format!(
                "{} basins but {} arrays",
                headers.len(),
                arrays.len()
            )));
        }
        let mut basins = Vec::with_capacity(headers.len());
        for (h, values) in headers.into_iter().zip(arrays) {
            let width = h.dynamic_names.len() + 1;
            if values.len() % width != 0
                || values.len() / width != h.splits.test.end + config.lookback
            {
                return Err(format(format!(
                    "basin {} has a truncated series",
                    h.basin_id
                )));
            }
            basins.push(BasinDataset {
                basin_id: h.basin_id,
                start: h.start,
                dynamic_names: h.dynamic_names,
                target_name: h.target_name,
                values,
                static_names: h.static_names,
                statics: h.statics,
                lookback: config.lookback,
                calendar: config.calendar_features,
                splits: h.splits,
                normalization: h.normalization,
            });
        }
        Ok(Self {
            config,
            statics,
            basins,
            screening,
        })
    }

    pub fn accepted(&self) -> usize {
        self.screening
            .iter()
            .filter(|e| e.status == BasinStatus::Accepted)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{write_synthetic, SynthConfig};

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            lookback: 30,
            min_days: 3 * 365,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn pipeline_round_trips_through_cache() {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig {
            n_basins: 3,
            years: 4,
            ..SynthConfig::default()
        };
        write_synthetic(dir.path(), &synth).unwrap();
        let ds = build_dataset(
            &dir.path().join(TIMESERIES_DIR),
            &dir.path().join(ATTRIBUTES_FILE),
            &[],
            &small_config(),
        )
        .unwrap();
        assert_eq!(ds.basins.len(), 3);
        for b in &ds.basins {
            assert_eq!(b.num_samples(), b.days() - 30);
            assert_eq!(b.statics.len(), ds.statics.stats.len());
            assert!(b.values.iter().all(|v| v.is_finite()));
        }
        let path = dir.path().join("data.tdx");
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);

        std::fs::remove_file(timeseries_path(
            &dir.path().join(TIMESERIES_DIR),
            &ds.basins[0].basin_id,
        ))
        .unwrap();
        let partial = build_dataset(
            &dir.path().join(TIMESERIES_DIR),
            &dir.path().join(ATTRIBUTES_FILE),
            &[],
            &small_config(),
        )
        .unwrap();
        assert_eq!(partial.accepted(), 2);
        assert!(matches!(
            partial.screening[0].status,
            BasinStatus::Failed { .. }
        ));

        let ids = vec![ds.basins[1].basin_id.clone()];
        let one = build_dataset(
            &dir.path().join(TIMESERIES_DIR),
            &dir.path().join(ATTRIBUTES_FILE),
            &ids,
            &small_config(),
        )
        .unwrap();
        assert_eq!(one.basins.len(), 1);
        assert!(one.basins[0].statics.is_empty());
    }

    #[test]
    fn short_basins_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic(
            dir.path(),
            &SynthConfig {
                n_basins: 1,
                years: 2,
                ..SynthConfig::default()
            },
        )
        .unwrap();
        let ds = build_dataset(
            &dir.path().join(TIMESERIES_DIR),
            &dir.path().join(ATTRIBUTES_FILE),
            &[],
            &small_config(),
        )
        .unwrap();
        assert!(ds.basins.is_empty());
        assert!(matches!(
            ds.screening[0].status,
            BasinStatus::Rejected {
                rejection: Rejection::Length { .. }
            }
        ));
        assert_eq!(ds.accepted(), 0);
    }

    #[test]
    fn corrupt_cache_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tdx");
        std::fs::write(&p, b"TDX1\x05").unwrap();
        assert!(matches!(Dataset::load(&p), Err(Error::Format { .. })));
    }
}
