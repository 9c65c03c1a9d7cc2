use chrono::{Datelike, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use super::normalize::NormalizationSpec;
use super::record::BasinRecord;
use super::split::SplitRanges;
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::models::{Batch, InputDims};

/// Value of the relative time index of the forecast day, the one input known
/// in advance for a one-day horizon.
pub const FORECAST_TIME_INDEX: f64 = 0.0;

/// A forecast sample, identified by the row of its target day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub target_index: usize,
    pub date: NaiveDate,
    /// Normalized target.
    pub target: f64,
}

/// One sample per target row `t ∈ [lookback, T)`; each sees rows
/// `[t − lookback, t)` as its past window.
pub fn window(record: &BasinRecord, lookback: usize) -> Vec<SequenceSample> {
    if record.len() <= lookback {
        warn!(
            "basin {}: {} days do not exceed the {lookback}-day lookback; no samples",
            record.basin_id,
            record.len()
        );
        return Vec::new();
    }
    (lookback..record.len())
        .map(|t| SequenceSample {
            target_index: t,
            date: record.date(t),
            target: record.target[t],
        })
        .collect()
}

/// Known-future inputs of a target date: the relative time index, optionally
/// followed by the sine and cosine of the day of year.
pub fn known_features(date: NaiveDate, calendar: bool) -> Vec<f64> {
    let mut out = vec![FORECAST_TIME_INDEX];
    if calendar {
        let phase = 2.0 * std::f64::consts::PI * f64::from(date.ordinal0()) / 365.25;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    out
}

/// Names of [`known_features`], in order.
pub fn known_feature_names(calendar: bool) -> Vec<String> {
    let mut names = vec!["time_index".to_string()];
    if calendar {
        names.extend(["doy_sin".to_string(), "doy_cos".to_string()]);
    }
    names
}

/// A normalized, windowed basin ready for training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinDataset {
    pub basin_id: String,
    pub start: NaiveDate,
    pub dynamic_names: Vec<String>,
    pub target_name: String,
    /// Row-major `[T, n_dynamic + 1]`, target in the last column.
    pub values: Vec<f64>,
    pub static_names: Vec<String>,
    /// Statics after cross-basin normalization.
    pub statics: Vec<f64>,
    pub lookback: usize,
    pub calendar: bool,
    /// Sample-index ranges; sample `k` forecasts row `lookback + k`.
    pub splits: SplitRanges,
    pub normalization: NormalizationSpec,
}

impl BasinDataset {
    /// Assembles a dataset from an infilled, normalized record.
    pub fn from_normalized(
        record: &BasinRecord,
        static_names: Vec<String>,
        statics: Vec<f64>,
        lookback: usize,
        calendar: bool,
        splits: SplitRanges,
        normalization: NormalizationSpec,
    ) -> Result<Self> {
        if splits.test.end + lookback != record.len() {
            return Err(Error::Contract(format!(
                "{} samples with lookback {lookback} do not cover {} days",
                splits.test.end,
                record.len()
            )));
        }
        let width = record.dynamic.len() + 1;
        let mut values = Vec::with_capacity(record.len() * width);
        for t in 0..record.len() {
            values.extend(record.dynamic.iter().map(|c| c[t]));
            values.push(record.target[t]);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "basin {} has unfilled values",
                record.basin_id
            )));
        }
        Ok(Self {
            basin_id: record.basin_id.clone(),
            start: record.start,
            dynamic_names: record.dynamic_names.clone(),
            target_name: record.target_name.clone(),
            values,
            static_names,
            statics,
            lookback,
            calendar,
            splits,
            normalization,
        })
    }

    pub fn width(&self) -> usize {
        self.dynamic_names.len() + 1
    }

    /// Columns of a window: dynamic variables, then the target.
    pub fn past_names(&self) -> Vec<String> {
        let mut names = self.dynamic_names.clone();
        names.push(self.target_name.clone());
        names
    }

    pub fn days(&self) -> usize {
        self.values.len() / self.width()
    }

    pub fn num_samples(&self) -> usize {
        self.days() - self.lookback
    }

    pub fn dims(&self) -> InputDims {
        InputDims {
            n_dynamic: self.dynamic_names.len(),
            n_static: self.statics.len(),
            n_known: known_features(self.start, self.calendar).len(),
        }
    }

    pub fn date(&self, row: usize) -> NaiveDate {
        self.start + chrono::Days::new(row as u64)
    }

    /// Normalized target of every row.
    pub fn target_column(&self) -> Vec<f64> {
        let w = self.width();
        self.values.iter().skip(w - 1).step_by(w).copied().collect()
    }

    pub fn sample(&self, k: usize) -> SequenceSample {
        let t = self.lookback + k;
        SequenceSample {
            target_index: t,
            date: self.date(t),
            target: self.values[t * self.width() + self.width() - 1],
        }
    }

    /// The `[lookback, n_dynamic + 1]` past window of sample `k`.
    pub fn past(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.values[k * w..(k + self.lookback) * w]
    }

    /// Minibatch of the given samples. With `unit_target` the targets are
    /// mapped onto the unit interval for a sigmoid-headed model.
    pub fn batch(&self, samples: &[usize], unit_target: bool) -> Result<Batch> {
        let (w, l) = (self.width(), self.lookback);
        let n = self.num_samples();
        let mut windows = Vec::with_capacity(samples.len() * (l + 1) * w);
        let mut known = Vec::new();
        let mut targets = Vec::with_capacity(samples.len());
        for &k in samples {
            if k >= n {
                return Err(Error::Index(format!(
                    "sample {k} of {n} in basin {}",
                    self.basin_id
                )));
            }
            let t = l + k;
            windows.extend_from_slice(&self.values[k * w..(t + 1) * w]);
            let z = windows.pop().expect("window is non-empty");
            windows.push(0.0);
            targets.push(if unit_target {
                self.normalization.target_to_unit(z)
            } else {
                z
            });
            known.extend(known_features(self.date(t), self.calendar));
        }
        let b = samples.len();
        Ok(Batch {
            windows: Tensor::new(vec![b, l + 1, w], windows)?,
            statics: if self.statics.is_empty() {
                None
            } else {
                Some(Tensor::new(
                    vec![b, self.statics.len()],
                    self.statics.repeat(b),
                )?)
            },
            known: Tensor::new(vec![b, self.dims().n_known], known)?,
            targets,
        })
    }
}
