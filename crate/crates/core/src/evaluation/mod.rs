//! Kling–Gupta efficiency and test-split evaluation with hydrograph tables.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::BasinDataset;
use crate::error::{Error, Result};
use crate::models::{Forecaster, ModelKind};
use crate::training::{quantile_loss_per_level, uses_unit_target};

/// The 2009 Kling–Gupta efficiency and its components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kge {
    pub kge: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Set when the simulation is constant; `r` is then reported as 0.
    pub sim_constant: bool,
}

pub fn kge(sim: &[f64], obs: &[f64]) -> Result<Kge> {
    if sim.len() != obs.len() || obs.len() < 2 {
        return Err(Error::Evaluation(format!(
            "KGE needs two equal series of at least 2 values, got {} and {}",
            sim.len(),
            obs.len()
        )));
    }
    let n = obs.len() as f64;
    let mo = obs.iter().sum::<f64>() / n;
    let ms = sim.iter().sum::<f64>() / n;
    // Central moments share one expression so that identical series give
    // r = 1 exactly.
    let moment = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n
    };
    let var_o = moment(obs, mo, obs, mo);
    let var_s = moment(sim, ms, sim, ms);
    if var_o == 0.0 {
        return Err(Error::Evaluation("observations have zero variance".into()));
    }
    if mo == 0.0 {
        return Err(Error::Evaluation("observations have zero mean".into()));
    }
    let sim_constant = var_s == 0.0;
    let r = if sim_constant {
        0.0
    } else {
        (moment(sim, ms, obs, mo) / (var_s * var_o).sqrt()).clamp(-1.0, 1.0)
    };
    let alpha = (var_s / var_o).sqrt();
    let beta = ms / mo;
    let kge = 1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt();
    Ok(Kge {
        kge,
        r,
        alpha,
        beta,
        sim_constant,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HydrographRow {
    pub date: NaiveDate,
    pub observed: f64,
    /// Point forecast: the LSTM output or the median quantile.
    pub predicted: f64,
    /// Every quantile forecast, empty for point models.
    pub quantiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub basin_id: String,
    pub model_kind: ModelKind,
    pub kge: Kge,
    /// Quantile levels of the forecast, empty for point models.
    pub levels: Vec<f64>,
    /// Mean pinball loss per level in physical units.
    pub quantile_losses: Vec<f64>,
    pub hydrograph: Vec<HydrographRow>,
}

impl EvalResult {
    /// Share of observations inside the band between two quantile levels.
    pub fn coverage(&self, lower: f64, upper: f64) -> Result<f64> {
        let find = |q: f64| {
            self.levels
                .iter()
                .position(|l| (l - q).abs() < 1e-12)
                .ok_or_else(|| Error::Evaluation(format!("no forecast for quantile {q}")))
        };
        let (lo, hi) = (find(lower)?, find(upper)?);
        let inside = self
            .hydrograph
            .iter()
            .filter(|r| r.quantiles[lo] <= r.observed && r.observed <= r.quantiles[hi])
            .count();
        Ok(inside as f64 / self.hydrograph.len() as f64)
    }
}

/// Scores physical-space forecasts. `pred` is row-major `[n, width]` where
/// `width` is `levels.len()` for quantile forecasts and 1 otherwise.
pub fn score_forecasts(
    basin_id: &str,
    model_kind: ModelKind,
    dates: &[NaiveDate],
    observed: &[f64],
    pred: &[f64],
    levels: &[f64],
) -> Result<EvalResult> {
    let width = if levels.is_empty() { 1 } else { levels.len() };
    if pred.len() != observed.len() * width || dates.len() != observed.len() {
        return Err(Error::shape(
            "score_forecasts",
            &[pred.len()],
            &[observed.len(), width],
        ));
    }
    let point_col = if levels.is_empty() {
        0
    } else {
        levels
            .iter()
            .position(|q| (q - 0.5).abs() < 1e-12)
            .ok_or_else(|| Error::Evaluation("quantile forecasts need the 0.5 level".into()))?
    };
    let point: Vec<f64> = pred.chunks(width).map(|row| row[point_col]).collect();
    let score = kge(&point, observed)?;
    let quantile_losses = if levels.is_empty() {
        Vec::new()
    } else {
        quantile_loss_per_level(pred, observed, levels)?
    };
    let hydrograph = dates
        .iter()
        .zip(observed)
        .zip(pred.chunks(width))
        .map(|((d, o), row)| HydrographRow {
            date: *d,
            observed: *o,
            predicted: row[point_col],
            quantiles: if levels.is_empty() {
                Vec::new()
            } else {
                row.to_vec()
            },
        })
        .collect();
    Ok(EvalResult {
        basin_id: basin_id.to_string(),
        model_kind,
        kge: score,
        levels: levels.to_vec(),
        quantile_losses,
        hydrograph,
    })
}

/// Physical-space forecasts of the given samples, row-major `[n, width]`.
pub fn predict_physical(
    model: &Forecaster,
    data: &BasinDataset,
    samples: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let unit = uses_unit_target(model.kind());
    let spec = &data.normalization;
    let mut out = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk, unit)?;
        let values = model.predict(&batch, false)?.values;
        out.extend(values.data().iter().map(|v| {
            let z = if unit { spec.unit_to_target(*v) } else { *v };
            spec.denormalize_target(z)
        }));
    }
    Ok(out)
}

/// Evaluates a trained model on the test split of `data`.
pub fn evaluate(model: &Forecaster, data: &BasinDataset) -> Result<EvalResult> {
    let samples: Vec<usize> = data.splits.test.clone().collect();
    if samples.is_empty() {
        return Err(Error::Contract("empty test split".into()));
    }
    let pred = predict_physical(model, data, &samples, 256)?;
    let dates: Vec<NaiveDate> = samples.iter().map(|&k| data.sample(k).date).collect();
    let observed: Vec<f64> = samples
        .iter()
        .map(|&k| data.normalization.denormalize_target(data.sample(k).target))
        .collect();
    let levels: &[f64] = if model.kind().is_quantile() {
        &model.config.quantiles
    } else {
        &[]
    };
    score_forecasts(
        &data.basin_id,
        model.kind(),
        &dates,
        &observed,
        &pred,
        levels,
    )
}

/// Column label of a quantile level, `0.02 → p02`.
pub fn quantile_label(q: f64) -> String {
    format!("p{:02}", (q * 100.0).round() as i64)
}

pub fn write_hydrograph(path: &Path, result: &EvalResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "date".to_string(),
        "observed".to_string(),
        "predicted".to_string(),
    ];
    header.extend(result.levels.iter().map(|q| quantile_label(*q)));
    w.write_record(&header)?;
    for row in &result.hydrograph {
        let mut rec = vec![
            row.date.to_string(),
            row.observed.to_string(),
            row.predicted.to_string(),
        ];
        rec.extend(row.quantiles.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 9] = [
    "basin_id",
    "model",
    "kge",
    "r",
    "alpha",
    "beta",
    "sim_constant",
    "n_test",
    "mean_pinball",
];

pub fn metrics_row(result: &EvalResult) -> Vec<String> {
    let k = &result.kge;
    let pinball = if result.quantile_losses.is_empty() {
        String::new()
    } else {
        (result.quantile_losses.iter().sum::<f64>() / result.quantile_losses.len() as f64)
            .to_string()
    };
    vec![
        result.basin_id.clone(),
        result.model_kind.to_string(),
        k.kge.to_string(),
        k.r.to_string(),
        k.alpha.to_string(),
        k.beta.to_string(),
        k.sim_constant.to_string(),
        result.hydrograph.len().to_string(),
        pinball,
    ]
}

pub fn write_metrics(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in results {
        w.write_record(metrics_row(r))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
