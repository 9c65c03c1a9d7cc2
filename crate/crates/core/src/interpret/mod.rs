//! Variable importance and attention-by-lookback profiles from TFT
//! diagnostics.

use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::{known_feature_names, BasinDataset};
use crate::error::{Error, Result};
use crate::models::{Diagnostics, Forecaster, ModelKind};

pub const N_BINS: usize = 12;
pub const BIN_DAYS: usize = 30;

/// How lookback days are grouped into the twelve profile bins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    /// Bin `m` holds lookback days `30(m−1)+1 ..= 30m`; every older day falls
    /// into bin 12.
    #[default]
    Fixed30,
    /// Bin 1 is the calendar month of the day before the forecast, bin 2 the
    /// month before it, and so on; older months fall into bin 12.
    Calendar,
}

/// Zero-based 30-day bin of the day `days_back ≥ 1` before the forecast.
pub fn fixed_bin(days_back: usize) -> usize {
    ((days_back - 1) / BIN_DAYS).min(N_BINS - 1)
}

impl BinScheme {
    /// Zero-based bin of the day `days_back ≥ 1` before `target`.
    pub fn bin(self, days_back: usize, target: NaiveDate) -> usize {
        match self {
            BinScheme::Fixed30 => fixed_bin(days_back),
            BinScheme::Calendar => {
                let month = |d: NaiveDate| d.year() * 12 + d.month0() as i32;
                let newest = target - Days::new(1);
                let day = target - Days::new(days_back as u64);
                ((month(newest) - month(day)) as usize).min(N_BINS - 1)
            }
        }
    }

    pub fn label(self, bin: usize) -> String {
        match self {
            BinScheme::Fixed30 if bin + 1 == N_BINS => format!("days {}+", BIN_DAYS * bin + 1),
            BinScheme::Fixed30 => format!("days {}-{}", BIN_DAYS * bin + 1, BIN_DAYS * (bin + 1)),
            BinScheme::Calendar if bin + 1 == N_BINS => format!("month {}+", bin + 1),
            BinScheme::Calendar => format!("month {}", bin + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub variable: String,
    pub weight: f64,
}

/// Mean weight of each variable over the rows of `weights` (row-major,
/// `names.len()` columns), renormalized to sum to 1.
pub fn importance_map(names: &[String], weights: &[f64]) -> Result<Vec<Importance>> {
    let m = names.len();
    if m == 0 || weights.is_empty() || weights.len() % m != 0 {
        return Err(Error::shape("importance_map", &[weights.len()], &[m]));
    }
    let mut acc = vec![0.0; m];
    for row in weights.chunks(m) {
        for (a, w) in acc.iter_mut().zip(row) {
            *a += w;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(names
        .iter()
        .zip(acc)
        .map(|(n, a)| Importance {
            variable: n.clone(),
            weight: a / total,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub label: String,
    pub mean_pct: f64,
    pub p25: f64,
    pub p75: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Twelve-bin profile of where the forecast position attends in the past.
///
/// Each row holds the head-averaged attention of one sample over the
/// `lookback` past positions (oldest first) followed by the forecast day
/// itself. The forecast day is excluded, the past mass renormalized to 100%,
/// and binned by days back from the forecast date.
pub fn attention_profile(
    rows: &[f64],
    lookback: usize,
    dates: &[NaiveDate],
    scheme: BinScheme,
) -> Result<Vec<ProfileBin>> {
    let width = lookback + 1;
    if lookback == 0 || rows.len() != dates.len() * width || dates.is_empty() {
        return Err(Error::shape(
            "attention_profile",
            &[rows.len()],
            &[dates.len(), width],
        ));
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(dates.len()); N_BINS];
    for (row, &date) in rows.chunks(width).zip(dates) {
        let past = &row[..lookback];
        let mass: f64 = past.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::Numerical("attention row without past mass".into()));
        }
        let mut bins = [0.0; N_BINS];
        for (p, w) in past.iter().enumerate() {
            bins[scheme.bin(lookback - p, date)] += 100.0 * w / mass;
        }
        for (acc, b) in per_bin.iter_mut().zip(bins) {
            acc.push(b);
        }
    }
    Ok(per_bin
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            let mean_pct = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            ProfileBin {
                label: scheme.label(i),
                mean_pct,
                p25: percentile(&v, 0.25),
                p75: percentile(&v, 0.75),
            }
        })
        .collect())
}

/// Share of the profile that uniform attention over `lookback` days puts in
/// each bin, in percent.
pub fn uniform_profile(lookback: usize) -> Vec<f64> {
    let mut bins = vec![0.0; N_BINS];
    for d in 1..=lookback {
        bins[fixed_bin(d)] += 100.0 / lookback as f64;
    }
    bins
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub variable: String,
    pub group: String,
    /// Group weight divided by the number of groups.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretabilityReport {
    pub basin_id: String,
    pub sample_count: usize,
    pub static_importance: Vec<Importance>,
    pub encoder_importance: Vec<Importance>,
    pub decoder_importance: Vec<Importance>,
    pub merged_ranking: Vec<RankedVariable>,
    pub bin_scheme: BinScheme,
    pub attention_profile: Vec<ProfileBin>,
}

impl InterpretabilityReport {
    pub fn encoder_weight(&self, variable: &str) -> Option<f64> {
        self.encoder_importance
            .iter()
            .find(|i| i.variable == variable)
            .map(|i| i.weight)
    }
}

fn merge(groups: &[(&str, &[Importance])]) -> Vec<RankedVariable> {
    let present: Vec<_> = groups.iter().filter(|(_, g)| !g.is_empty()).collect();
    let share = 1.0 / present.len() as f64;
    let mut out: Vec<RankedVariable> = present
        .iter()
        .flat_map(|(group, items)| {
            items.iter().map(move |i| RankedVariable {
                variable: i.variable.clone(),
                group: group.to_string(),
                weight: i.weight * share,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| a.variable.cmp(&b.variable))
    });
    out
}

/// Aggregates TFT diagnostics over `samples` of `data`.
pub fn interpret(
    model: &Forecaster,
    data: &BasinDataset,
    samples: &[usize],
    scheme: BinScheme,
) -> Result<InterpretabilityReport> {
    if model.kind() != ModelKind::Tft {
        return Err(Error::Unsupported(format!(
            "interpretation needs a TFT checkpoint, got {}",
            model.kind()
        )));
    }
    if samples.is_empty() {
        return Err(Error::Contract("no samples to interpret".into()));
    }
    let mut statics = Vec::new();
    let mut past = Vec::new();
    let mut future = Vec::new();
    let mut attention = Vec::new();
    for chunk in samples.chunks(128) {
        let batch = data.batch(chunk, false)?;
        let Diagnostics {
            static_weights,
            past_weights,
            future_weights,
            attention: attn,
        } = model
            .predict(&batch, true)?
            .diagnostics
            .ok_or_else(|| Error::Contract("TFT returned no diagnostics".into()))?;
        if let Some(s) = static_weights {
            statics.extend_from_slice(s.data());
        }
        past.extend_from_slice(past_weights.data());
        future.extend_from_slice(future_weights.data());
        attention.extend_from_slice(attn.data());
    }
    let static_importance = if data.static_names.is_empty() {
        Vec::new()
    } else {
        importance_map(&data.static_names, &statics)?
    };
    let encoder_importance = importance_map(&data.past_names(), &past)?;
    let decoder_importance = importance_map(&known_feature_names(data.calendar), &future)?;
    let dates: Vec<NaiveDate> = samples.iter().map(|&k| data.sample(k).date).collect();
    let attention_profile = attention_profile(&attention, data.lookback, &dates, scheme)?;
    let merged_ranking = merge(&[
        ("static", &static_importance),
        ("encoder", &encoder_importance),
        ("decoder", &decoder_importance),
    ]);
    Ok(InterpretabilityReport {
        basin_id: data.basin_id.clone(),
        sample_count: samples.len(),
        static_importance,
        encoder_importance,
        decoder_importance,
        merged_ranking,
        bin_scheme: scheme,
        attention_profile,
    })
}

/// Writes `importance.csv` (variable, group, weight), `ranking.csv` and
/// `attention_profile.csv` (bin, mean_pct, p25, p75) into `dir`.
pub fn write_tables(dir: &Path, report: &InterpretabilityReport) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("importance.csv"))?;
    w.write_record(["variable", "group", "weight"])?;
    for (group, items) in [
        ("static", &report.static_importance),
        ("encoder", &report.encoder_importance),
        ("decoder", &report.decoder_importance),
    ] {
        for i in items {
            w.write_record([i.variable.as_str(), group, &i.weight.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("ranking.csv"))?;
    w.write_record(["rank", "variable", "group", "weight"])?;
    for (k, r) in report.merged_ranking.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            r.variable.clone(),
            r.group.clone(),
            r.weight.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("attention_profile.csv"))?;
    w.write_record(["bin", "label", "mean_pct", "p25", "p75"])?;
    for (k, b) in report.attention_profile.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            b.label.clone(),
            b.mean_pct.to_string(),
            b.p25.to_string(),
            b.p75.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
