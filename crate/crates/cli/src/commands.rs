//! The operator commands. Each returns its result for programmatic use and
//! writes its tables and provenance under the requested output path.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flowcast::data::{
    build_dataset, known_feature_names, write_synthetic, BasinDataset, Dataset, IngestEntry,
    SynthConfig,
};
use flowcast::evaluation::{evaluate, write_hydrograph, write_metrics, EvalResult};
use flowcast::interpret::{interpret, write_tables, BinScheme, InterpretabilityReport};
use flowcast::models::{build_model, Forecaster, ModelKind};
use flowcast::training::{train, TrainingReport};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunRecord};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_FILE: &str = "checkpoint.tfx";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const HYDROGRAPH_FILE: &str = "hydrograph.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const INTERPRETATION_FILE: &str = "interpretation.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const RUN_FILE: &str = "run.json";

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_cache(cache: &Path) -> CliResult<Dataset> {
    require_file(cache, "cache")?;
    Ok(Dataset::load(cache)?)
}

/// Directory holding the checkpoint and tables of one basin and model.
pub fn run_dir(out: &Path, basin_id: &str, kind: ModelKind) -> PathBuf {
    out.join(basin_id).join(kind.name())
}

// ---- synth ---------------------------------------------------------------

/// Writes a synthetic data directory and returns its basin ids.
pub fn cmd_synth(out: &Path, config: &SynthConfig) -> CliResult<Vec<String>> {
    let records = write_synthetic(out, config)?;
    Ok(records.into_iter().map(|r| r.basin_id).collect())
}

// ---- ingest --------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub cache: PathBuf,
    pub entries: Vec<IngestEntry>,
}

impl IngestSummary {
    pub fn accepted(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.status.describe().0 == "accepted")
            .count()
    }

    pub fn table(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.basin_id.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("{:<width$}  {:<8}  reason\n", "basin", "status");
        for e in &self.entries {
            let (status, reason) = e.status.describe();
            let _ = writeln!(out, "{:<width$}  {:<8}  {}", e.basin_id, status, reason);
        }
        let _ = writeln!(
            out,
            "{} of {} basins accepted",
            self.accepted(),
            self.entries.len()
        );
        out
    }
}

/// Sidecar path next to a cache file, `data.tdx → data.<suffix>`.
pub fn cache_sidecar(cache: &Path, suffix: &str) -> PathBuf {
    cache.with_extension(suffix)
}

/// Screens, fills and windows every basin listed in `attributes` (or only
/// `basins`) and caches the accepted ones. Writes the screening table to
/// `<cache>.screening.csv` whatever the outcome; fails only when no basin is
/// accepted.
pub fn cmd_ingest(
    timeseries_dir: &Path,
    attributes: &Path,
    out_cache: &Path,
    config: &RunConfig,
    basins: &[String],
) -> CliResult<IngestSummary> {
    if !timeseries_dir.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is not a directory",
            timeseries_dir.display()
        )));
    }
    require_file(attributes, "attributes table")?;
    let has_series = fs::read_dir(timeseries_dir)?
        .filter_map(|e| e.ok())
        .any(|e| e.path().extension().is_some_and(|x| x == "csv"));
    if !has_series {
        return Err(CliError::Data(format!(
            "no basin files in {}",
            timeseries_dir.display()
        )));
    }
    let dataset = build_dataset(timeseries_dir, attributes, basins, &config.data)?;
    if let Some(parent) = out_cache.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let summary = IngestSummary {
        cache: out_cache.to_path_buf(),
        entries: dataset.screening.clone(),
    };
    let mut w = csv::Writer::from_path(cache_sidecar(out_cache, "screening.csv"))?;
    w.write_record(["basin_id", "status", "reason"])?;
    for e in &summary.entries {
        let (status, reason) = e.status.describe();
        w.write_record([e.basin_id.as_str(), status, &reason])?;
    }
    w.flush()?;
    write_json(
        &cache_sidecar(out_cache, "run.json"),
        &RunRecord::new("ingest", config),
    )?;
    if dataset.basins.is_empty() {
        return Err(CliError::Data(format!(
            "none of {} basins was accepted\n{}",
            summary.entries.len(),
            summary.table()
        )));
    }
    dataset.save(out_cache)?;
    Ok(summary)
}

// ---- train ---------------------------------------------------------------

/// Input variables a checkpoint was trained on, in model order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub past: Vec<String>,
    pub statics: Vec<String>,
    pub known: Vec<String>,
    pub lookback: usize,
}

impl FeatureManifest {
    pub fn of(data: &BasinDataset) -> Self {
        Self {
            past: data.past_names(),
            statics: data.static_names.clone(),
            known: known_feature_names(data.calendar),
            lookback: data.lookback,
        }
    }

    /// Differences from `other`, one line per group that differs.
    pub fn differences(&self, other: &FeatureManifest) -> Vec<String> {
        let mut out = Vec::new();
        for (group, a, b) in [
            ("dynamic", &self.past, &other.past),
            ("static", &self.statics, &other.statics),
            ("known", &self.known, &other.known),
        ] {
            if a == b {
                continue;
            }
            let only_a: Vec<&str> = a
                .iter()
                .filter(|v| !b.contains(v))
                .map(String::as_str)
                .collect();
            let only_b: Vec<&str> = b
                .iter()
                .filter(|v| !a.contains(v))
                .map(String::as_str)
                .collect();
            if only_a.is_empty() && only_b.is_empty() {
                out.push(format!(
                    "{group} variables in a different order: {a:?} vs {b:?}"
                ));
            } else {
                out.push(format!(
                    "{group} variables only in checkpoint: {only_a:?}; only in cache: {only_b:?}"
                ));
            }
        }
        if self.lookback != other.lookback {
            out.push(format!("lookback {} vs {}", self.lookback, other.lookback));
        }
        out
    }
}

/// Metadata stored in every checkpoint header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub run: RunRecord,
    pub basin_id: String,
    pub features: FeatureManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub run: RunRecord,
    pub checkpoint: PathBuf,
    pub report: TrainingReport,
}

fn train_model(
    data: &BasinDataset,
    kind: ModelKind,
    config: &RunConfig,
) -> CliResult<(Forecaster, TrainingReport)> {
    let model_config = config.model_for(kind, data.lookback)?;
    let mut model = build_model(&model_config, data.dims(), config.train.seed)?;
    info!(
        "training {kind} on basin {} ({} parameters)",
        data.basin_id,
        model.num_params()
    );
    let report = train(&mut model, data, &config.train)?;
    info!(
        "{kind} on basin {}: best epoch {} of {}, validation loss {:.5}",
        data.basin_id, report.best_epoch, report.stopped_epoch, report.best_val_loss
    );
    Ok((model, report))
}

fn train_into(
    data: &BasinDataset,
    kind: ModelKind,
    config: &RunConfig,
    out: &Path,
) -> CliResult<TrainOutput> {
    let (model, report) = train_model(data, kind, config)?;
    let dir = run_dir(out, &data.basin_id, kind);
    fs::create_dir_all(&dir)?;
    let run = RunRecord::new("train", config);
    let meta = CheckpointMeta {
        run: run.clone(),
        basin_id: data.basin_id.clone(),
        features: FeatureManifest::of(data),
    };
    let checkpoint = dir.join(CHECKPOINT_FILE);
    model.save(&checkpoint, serde_json::to_value(&meta)?)?;
    let output = TrainOutput {
        run,
        checkpoint,
        report,
    };
    write_json(&dir.join(REPORT_FILE), &output)?;
    Ok(output)
}

/// Trains one model on one cached basin and writes
/// `out/<basin>/<model>/{checkpoint.tfx, report.json}`.
pub fn cmd_train(
    cache: &Path,
    basin_id: &str,
    kind: ModelKind,
    config: &RunConfig,
    out: &Path,
) -> CliResult<TrainOutput> {
    let dataset = load_cache(cache)?;
    let data = dataset.basin(basin_id)?;
    train_into(data, kind, config, out)
}

// ---- evaluate / interpret ------------------------------------------------

/// Loads a checkpoint and the cached basin it was trained on, checking that
/// the cache still provides the same inputs.
pub fn open_checkpoint(
    checkpoint: &Path,
    dataset: &Dataset,
) -> CliResult<(Forecaster, CheckpointMeta, BasinDataset)> {
    require_file(checkpoint, "checkpoint")?;
    let (model, meta) = Forecaster::load(checkpoint)?;
    let meta: CheckpointMeta = serde_json::from_value(meta).map_err(|e| {
        CliError::Data(format!(
            "checkpoint {} lacks run metadata: {e}",
            checkpoint.display()
        ))
    })?;
    let data = dataset.basin(&meta.basin_id)?;
    let diffs = meta.features.differences(&FeatureManifest::of(data));
    if !diffs.is_empty() {
        return Err(flowcast::Error::Compatibility(format!(
            "checkpoint {} does not match the cache: {}",
            checkpoint.display(),
            diffs.join("; ")
        ))
        .into());
    }
    Ok((model, meta, data.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub run: RunRecord,
    pub checkpoint: PathBuf,
    pub result: EvalResult,
}

/// Scores a checkpoint on the test split of its basin and writes
/// `metrics.csv`, `hydrograph.csv` and `evaluation.json` into `out`
/// (default: the checkpoint's directory).
pub fn cmd_evaluate(checkpoint: &Path, cache: &Path, out: Option<&Path>) -> CliResult<EvalResult> {
    let dataset = load_cache(cache)?;
    let (model, meta, data) = open_checkpoint(checkpoint, &dataset)?;
    let result = evaluate(&model, &data)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint_dir(checkpoint));
    fs::create_dir_all(&dir)?;
    write_metrics(&dir.join(METRICS_FILE), std::slice::from_ref(&result))?;
    write_hydrograph(&dir.join(HYDROGRAPH_FILE), &result)?;
    let output = EvaluationOutput {
        run: RunRecord {
            command: "evaluate".into(),
            ..meta.run
        },
        checkpoint: checkpoint.to_path_buf(),
        result,
    };
    write_json(&dir.join(EVALUATION_FILE), &output)?;
    Ok(output.result)
}

fn checkpoint_dir(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Which samples an interpretation aggregates over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSet {
    #[default]
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretationOutput {
    pub run: RunRecord,
    pub checkpoint: PathBuf,
    pub samples: SampleSet,
    pub report: InterpretabilityReport,
}

/// Aggregates TFT variable-selection weights and attention over a split and
/// writes the importance, ranking and attention-profile tables.
pub fn cmd_interpret(
    checkpoint: &Path,
    cache: &Path,
    out: Option<&Path>,
    scheme: BinScheme,
    samples: SampleSet,
) -> CliResult<InterpretabilityReport> {
    let dataset = load_cache(cache)?;
    let (model, meta, data) = open_checkpoint(checkpoint, &dataset)?;
    let indices: Vec<usize> = match samples {
        SampleSet::Test => data.splits.test.clone().collect(),
        SampleSet::All => (0..data.num_samples()).collect(),
    };
    let report = interpret(&model, &data, &indices, scheme)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint_dir(checkpoint));
    fs::create_dir_all(&dir)?;
    write_tables(&dir, &report)?;
    let output = InterpretationOutput {
        run: RunRecord {
            command: "interpret".into(),
            ..meta.run
        },
        checkpoint: checkpoint.to_path_buf(),
        samples,
        report,
    };
    write_json(&dir.join(INTERPRETATION_FILE), &output)?;
    Ok(output.report)
}

// ---- compare -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub basin_id: String,
    /// Test KGE per model, in [`ModelKind::ALL`] order.
    pub kge: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub median: [f64; 3],
    pub results: Vec<EvalResult>,
}

impl Comparison {
    pub fn median_of(&self, kind: ModelKind) -> f64 {
        self.median[kind as usize]
    }

    pub fn table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.basin_id.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!("{:<width$}", "basin");
        for kind in ModelKind::ALL {
            let _ = write!(out, "  {:>11}", kind.name());
        }
        out.push('\n');
        let line = |out: &mut String, name: &str, kge: &[f64; 3]| {
            let _ = write!(out, "{name:<width$}");
            for k in kge {
                let _ = write!(out, "  {k:>11.4}");
            }
            out.push('\n');
        };
        for r in &self.rows {
            line(&mut out, &r.basin_id, &r.kge);
        }
        line(&mut out, "median", &self.median);
        out
    }
}

/// Median, averaging the middle pair of an even count.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn reusable(
    checkpoint: &Path,
    data: &BasinDataset,
    kind: ModelKind,
    config: &RunConfig,
) -> Option<Forecaster> {
    let (model, meta) = Forecaster::load(checkpoint).ok()?;
    let meta: CheckpointMeta = serde_json::from_value(meta).ok()?;
    let fits = model.kind() == kind
        && meta.run.config_hash == config.hash()
        && meta.basin_id == data.basin_id
        && meta.features == FeatureManifest::of(data);
    fits.then_some(model)
}

fn compare_basin(
    data: &BasinDataset,
    config: &RunConfig,
    out: &Path,
    reuse: bool,
) -> CliResult<Vec<EvalResult>> {
    let mut results = Vec::with_capacity(3);
    for kind in ModelKind::ALL {
        let dir = run_dir(out, &data.basin_id, kind);
        let checkpoint = dir.join(CHECKPOINT_FILE);
        let model = match reuse
            .then(|| reusable(&checkpoint, data, kind, config))
            .flatten()
        {
            Some(model) => {
                info!("reusing {}", checkpoint.display());
                model
            }
            None => {
                train_into(data, kind, config, out)?;
                Forecaster::load(&checkpoint)?.0
            }
        };
        let result = evaluate(&model, data)?;
        write_metrics(&dir.join(METRICS_FILE), std::slice::from_ref(&result))?;
        write_hydrograph(&dir.join(HYDROGRAPH_FILE), &result)?;
        results.push(result);
    }
    Ok(results)
}

/// Trains (or, with `reuse`, reloads) all three models on each basin,
/// evaluates them on the test split and writes `comparison.csv` (per-basin
/// KGE plus a median row), `metrics.csv` and `run.json` into `out`.
/// `jobs` basins run in parallel.
pub fn cmd_compare(
    cache: &Path,
    basins: &[String],
    config: &RunConfig,
    out: &Path,
    jobs: usize,
    reuse: bool,
) -> CliResult<Comparison> {
    let dataset = load_cache(cache)?;
    let selected: Vec<&BasinDataset> = if basins.is_empty() {
        dataset.basins.iter().collect()
    } else {
        basins
            .iter()
            .map(|id| dataset.basin(id))
            .collect::<flowcast::Result<_>>()?
    };
    if selected.is_empty() {
        return Err(CliError::Usage("the cache holds no basins".into()));
    }
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    let per_basin: Vec<CliResult<Vec<EvalResult>>> = pool.install(|| {
        selected
            .par_iter()
            .map(|d| compare_basin(d, config, out, reuse))
            .collect()
    });
    let per_basin: Vec<Vec<EvalResult>> = per_basin.into_iter().collect::<CliResult<_>>()?;

    let rows: Vec<ComparisonRow> = per_basin
        .iter()
        .map(|results| ComparisonRow {
            basin_id: results[0].basin_id.clone(),
            kge: [results[0].kge.kge, results[1].kge.kge, results[2].kge.kge],
        })
        .collect();
    let column = |k: usize| median(&rows.iter().map(|r| r.kge[k]).collect::<Vec<_>>());
    let comparison = Comparison {
        median: [column(0), column(1), column(2)],
        rows,
        results: per_basin.into_iter().flatten().collect(),
    };

    let mut w = csv::Writer::from_path(out.join(COMPARISON_FILE))?;
    let mut header = vec!["basin_id".to_string()];
    header.extend(ModelKind::ALL.iter().map(|k| k.name().to_string()));
    w.write_record(&header)?;
    for r in &comparison.rows {
        let mut rec = vec![r.basin_id.clone()];
        rec.extend(r.kge.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let mut rec = vec!["median".to_string()];
    rec.extend(comparison.median.iter().map(f64::to_string));
    w.write_record(&rec)?;
    w.flush()?;
    write_metrics(&out.join(METRICS_FILE), &comparison.results)?;
    write_json(&out.join(RUN_FILE), &RunRecord::new("compare", config))?;
    Ok(comparison)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn manifest_differences_name_the_variables() {
        let a = FeatureManifest {
            past: vec!["p".into(), "t".into(), "q".into()],
            statics: vec!["area".into()],
            known: vec!["time_index".into()],
            lookback: 90,
        };
        assert!(a.differences(&a).is_empty());
        let b = FeatureManifest {
            past: vec!["p".into(), "pet".into(), "q".into()],
            lookback: 30,
            ..a.clone()
        };
        let d = a.differences(&b).join("; ");
        assert!(
            d.contains("[\"t\"]") && d.contains("[\"pet\"]") && d.contains("lookback 90 vs 30"),
            "{d}"
        );
        let c = FeatureManifest {
            past: vec!["t".into(), "p".into(), "q".into()],
            ..a.clone()
        };
        assert!(a.differences(&c)[0].contains("order"));
    }
}
