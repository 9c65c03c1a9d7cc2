use std::ops::Range;

use log::warn;
use serde::{Deserialize, Serialize};

use super::record::BasinRecord;
use crate::error::{Error, Result};

/// Relative headroom added on each side of the training target range for the
/// unit-interval target transform.
pub const UNIT_HEADROOM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl VarStats {
    /// Mean and population standard deviation of `values`.
    pub fn fit(name: &str, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            name: name.to_string(),
            mean,
            std: var.sqrt(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.std > 1e-12 * (1.0 + self.mean.abs()))
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-basin scaling fitted on the rows the training samples can see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    /// Retained dynamic variables in record order.
    pub dynamic: Vec<VarStats>,
    /// Dynamic variables dropped for zero variance.
    pub dropped: Vec<String>,
    pub target: VarStats,
    /// Normalized-target interval mapped onto (0, 1).
    pub unit_range: (f64, f64),
    pub fit_rows: Range<usize>,
}

impl NormalizationSpec {
    pub fn target_to_unit(&self, z: f64) -> f64 {
        (z - self.unit_range.0) / (self.unit_range.1 - self.unit_range.0)
    }

    pub fn unit_to_target(&self, u: f64) -> f64 {
        u * (self.unit_range.1 - self.unit_range.0) + self.unit_range.0
    }

    /// Physical streamflow from a normalized value.
    pub fn denormalize_target(&self, z: f64) -> f64 {
        self.target.invert(z)
    }

    pub fn normalize_target(&self, q: f64) -> f64 {
        self.target.apply(q)
    }
}

/// Fits z-score statistics on `rows` of an infilled record. Dynamic
/// variables with zero variance there are dropped; a constant target is an
/// error.
pub fn fit_normalization(record: &BasinRecord, rows: Range<usize>) -> Result<NormalizationSpec> {
    if rows.is_empty() || rows.end > record.len() {
        return Err(Error::Contract(format!(
            "normalization rows {rows:?} outside a record of {} days",
            record.len()
        )));
    }
    let mut dynamic = Vec::new();
    let mut dropped = Vec::new();
    for (name, col) in record.dynamic_names.iter().zip(&record.dynamic) {
        let stats = VarStats::fit(name, &col[rows.clone()]);
        if stats.is_degenerate() {
            warn!(
                "basin {}: dropping constant variable `{name}`",
                record.basin_id
            );
            dropped.push(name.clone());
        } else {
            dynamic.push(stats);
        }
    }
    let target = VarStats::fit(&record.target_name, &record.target[rows.clone()]);
    if target.is_degenerate() {
        return Err(Error::Numerical(format!(
            "basin {}: target `{}` is constant on the training rows",
            record.basin_id, record.target_name
        )));
    }
    let (lo, hi) = record.target[rows.clone()]
        .iter()
        .map(|v| target.apply(*v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
            (lo.min(z), hi.max(z))
        });
    let pad = UNIT_HEADROOM * (hi - lo);
    Ok(NormalizationSpec {
        dynamic,
        dropped,
        target,
        unit_range: (lo - pad, hi + pad),
        fit_rows: rows,
    })
}

/// Applies `spec` to every row of the record, removing dropped variables.
pub fn apply_normalization(record: &BasinRecord, spec: &NormalizationSpec) -> Result<BasinRecord> {
    let mut out = record.clone();
    out.dynamic_names.clear();
    out.dynamic.clear();
    for stats in &spec.dynamic {
        let j = record
            .dynamic_names
            .iter()
            .position(|n| *n == stats.name)
            .ok_or_else(|| {
                Error::Compatibility(format!("record lacks variable `{}`", stats.name))
            })?;
        out.dynamic_names.push(stats.name.clone());
        out.dynamic
            .push(record.dynamic[j].iter().map(|v| stats.apply(*v)).collect());
    }
    out.target = record
        .target
        .iter()
        .map(|v| spec.target.apply(*v))
        .collect();
    Ok(out)
}

/// Cross-basin scaling of static attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticSpec {
    pub stats: Vec<VarStats>,
    pub dropped: Vec<String>,
}

impl StaticSpec {
    /// Z-scores each attribute across basins. Attributes that do not vary
    /// across the given basins carry no information and are dropped; with a
    /// single basin that is every attribute.
    pub fn fit(names: &[String], rows: &[Vec<f64>]) -> Self {
        let mut stats = Vec::new();
        let mut dropped = Vec::new();
        for (j, name) in names.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let s = VarStats::fit(name, &col);
            if s.is_degenerate() {
                dropped.push(name.clone());
            } else {
                stats.push(s);
            }
        }
        if !dropped.is_empty() {
            warn!("dropping static attributes without cross-basin variance: {dropped:?}");
        }
        Self { stats, dropped }
    }

    pub fn apply(&self, names: &[String], values: &[f64]) -> Result<Vec<f64>> {
        self.stats
            .iter()
            .map(|s| {
                names
                    .iter()
                    .position(|n| *n == s.name)
                    .map(|j| s.apply(values[j]))
                    .ok_or_else(|| {
                        Error::Compatibility(format!("basin lacks attribute `{}`", s.name))
                    })
            })
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.stats.iter().map(|s| s.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn record(dynamic: Vec<Vec<f64>>, target: Vec<f64>) -> BasinRecord {
        BasinRecord {
            basin_id: "b".into(),
            start: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            dynamic_names: (0..dynamic.len()).map(|i| format!("v{i}")).collect(),
            dynamic,
            target_name: "q".into(),
            target,
            static_names: vec![],
            statics: vec![],
        }
    }

    #[test]
    fn constant_variable_is_dropped() {
        let r = record(
            vec![vec![3.0; 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]],
            vec![1.0, 0.0, 2.0, 5.0, 1.0, 3.0],
        );
        let spec = fit_normalization(&r, 0..6).unwrap();
        assert_eq!(spec.dropped, vec!["v0"]);
        let n = apply_normalization(&r, &spec).unwrap();
        assert_eq!(n.dynamic_names, vec!["v1"]);
    }

    #[test]
    fn constant_target_is_an_error() {
        let r = record(vec![vec![1.0, 2.0, 3.0]], vec![2.0; 3]);
        assert!(matches!(
            fit_normalization(&r, 0..3),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn statistics_come_from_fit_rows_only() {
        let r = record(vec![vec![0.0, 2.0, 100.0]], vec![1.0, 3.0, -50.0]);
        let spec = fit_normalization(&r, 0..2).unwrap();
        assert_eq!(spec.dynamic[0].mean, 1.0);
        assert_eq!(spec.dynamic[0].std, 1.0);
        assert_eq!(spec.target.mean, 2.0);
        // Normalized training targets span [−1, 1]; 10% headroom each side.
        assert!((spec.unit_range.0 + 1.2).abs() < 1e-12 && (spec.unit_range.1 - 1.2).abs() < 1e-12);
        assert!((spec.target_to_unit(-1.0) - 0.2 / 2.4).abs() < 1e-12);
    }

    #[test]
    fn statics_scale_across_basins() {
        let names = vec!["area".to_string(), "flat".to_string()];
        let spec = StaticSpec::fit(&names, &[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(spec.dropped, vec!["flat"]);
        assert_eq!(spec.apply(&names, &[3.0, 5.0]).unwrap(), vec![1.0]);
        assert!(StaticSpec::fit(&names, &[vec![1.0, 5.0]]).stats.is_empty());
    }

    proptest! {
        #[test]
        fn train_rows_are_standardized_and_invertible(
            values in prop::collection::vec(-1e3f64..1e3, 8..200),
        ) {
            let n = values.len();
            let target: Vec<f64> = values.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let r = record(vec![values.clone()], target.clone());
            let spec = match fit_normalization(&r, 0..n) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            prop_assume!(spec.dropped.is_empty());
            let z = apply_normalization(&r, &spec).unwrap();
            for col in z.dynamic.iter().chain(std::iter::once(&z.target)) {
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            }
            for (orig, zv) in target.iter().zip(&z.target) {
                prop_assert!((spec.denormalize_target(*zv) - orig).abs() <= 1e-10 * (1.0 + orig.abs()));
                let u = spec.target_to_unit(*zv);
                prop_assert!(u > 0.0 && u < 1.0);
                prop_assert!((spec.unit_to_target(u) - zv).abs() < 1e-10);
            }
        }
    }
}
