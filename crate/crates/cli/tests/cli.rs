use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use flowcast::data::{
    generate, write_records, Dataset, SynthConfig, ATTRIBUTES_FILE, MISSING, TIMESERIES_DIR,
};
use flowcast::interpret::BinScheme;
use flowcast::models::ModelKind;
use flowcast_cli::commands::{
    run_dir, CHECKPOINT_FILE, COMPARISON_FILE, HYDROGRAPH_FILE, METRICS_FILE, REPORT_FILE,
};
use flowcast_cli::{
    cmd_compare, cmd_evaluate, cmd_ingest, cmd_interpret, cmd_synth, cmd_train, CliError,
    RunConfig, SampleSet, TrainOutput,
};
use tempfile::TempDir;

const CONFIG: &str = "
[data]
lookback = 20
min_days = 700

[model]
d_model = 8
n_heads = 2
n_encoder_blocks = 1
n_decoder_blocks = 1
lstm_layers = 1
lstm_hidden = 6
tft_hidden = 8

[train]
max_epochs = 2
patience = 1
batch_size = 64
";

fn config() -> RunConfig {
    RunConfig::parse(CONFIG).unwrap()
}

struct Fixture {
    dir: TempDir,
    cache: PathBuf,
    basins: Vec<String>,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn ingest_fixture(n_basins: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let synth = SynthConfig {
        n_basins,
        years: 2,
        ..SynthConfig::default()
    };
    let basins = cmd_synth(&data, &synth).unwrap();
    let cache = dir.path().join("cache.tdx");
    cmd_ingest(
        &data.join(TIMESERIES_DIR),
        &data.join(ATTRIBUTES_FILE),
        &cache,
        &config(),
        &[],
    )
    .unwrap();
    Fixture { dir, cache, basins }
}

fn train(f: &Fixture, kind: ModelKind, out: &str) -> TrainOutput {
    cmd_train(&f.cache, &f.basins[0], kind, &config(), &f.path(out)).unwrap()
}

#[test]
fn ingest_applies_the_gap_rule_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        n_basins: 2,
        years: 2,
        gap_rate: 0.0,
        ..SynthConfig::default()
    };
    let mut records = generate(&synth);
    for (r, gap) in records.iter_mut().zip([29, 30]) {
        r.dynamic[1][100..100 + gap].fill(MISSING);
    }
    write_records(dir.path(), &records).unwrap();
    let ts = dir.path().join(TIMESERIES_DIR);
    let attrs = dir.path().join(ATTRIBUTES_FILE);
    let cache = dir.path().join("out").join("cache.tdx");

    let summary = cmd_ingest(&ts, &attrs, &cache, &config(), &[]).unwrap();
    assert_eq!(summary.accepted(), 1);
    let (status, reason) = summary.entries[1].status.describe();
    assert_eq!(status, "rejected");
    assert!(reason.contains("gap of 30 days"), "{reason}");
    assert_eq!(summary.entries[0].status.describe().0, "accepted");

    let table = fs::read_to_string(dir.path().join("out").join("cache.screening.csv")).unwrap();
    let bytes = fs::read(&cache).unwrap();
    let again = cmd_ingest(&ts, &attrs, &cache, &config(), &[]).unwrap();
    assert_eq!(again, summary);
    assert_eq!(again.table(), summary.table());
    assert_eq!(
        fs::read_to_string(dir.path().join("out").join("cache.screening.csv")).unwrap(),
        table
    );
    assert_eq!(fs::read(&cache).unwrap(), bytes);
    assert_eq!(Dataset::load(&cache).unwrap().basins.len(), 1);
}

#[test]
fn ingest_reports_unreadable_basins_and_fails_only_when_none_survive() {
    let dir = tempfile::tempdir().unwrap();
    let ids = cmd_synth(
        dir.path(),
        &SynthConfig {
            n_basins: 2,
            years: 2,
            ..SynthConfig::default()
        },
    )
    .unwrap();
    let ts = dir.path().join(TIMESERIES_DIR);
    let attrs = dir.path().join(ATTRIBUTES_FILE);
    fs::write(
        ts.join(format!("{}.csv", ids[0])),
        "date,precipitation\nnot-a-date,1\n",
    )
    .unwrap();
    let cache = dir.path().join("cache.tdx");
    let summary = cmd_ingest(&ts, &attrs, &cache, &config(), &[]).unwrap();
    assert_eq!(summary.accepted(), 1);
    assert_eq!(summary.entries[0].status.describe().0, "failed");

    fs::remove_file(ts.join(format!("{}.csv", ids[1]))).unwrap();
    let err = cmd_ingest(&ts, &attrs, &dir.path().join("none.tdx"), &config(), &[]).unwrap_err();
    assert_eq!(err.code(), 3, "{err}");
    assert!(!dir.path().join("none.tdx").exists());
}

#[test]
fn ingest_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ts = dir.path().join("ts");
    fs::create_dir(&ts).unwrap();
    fs::write(dir.path().join("attrs.csv"), "basin_id,area\n").unwrap();
    let err = cmd_ingest(
        &ts,
        &dir.path().join("attrs.csv"),
        &dir.path().join("c.tdx"),
        &config(),
        &[],
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Data(_)), "{err}");
    let err = cmd_ingest(
        &dir.path().join("nope"),
        &dir.path().join("attrs.csv"),
        &dir.path().join("c.tdx"),
        &config(),
        &[],
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");
}

#[test]
fn train_writes_reproducible_checkpoints() {
    let f = ingest_fixture(1);
    let a = train(&f, ModelKind::Lstm, "a");
    let dir = run_dir(&f.path("a"), &f.basins[0], ModelKind::Lstm);
    assert_eq!(a.checkpoint, dir.join(CHECKPOINT_FILE));
    let report: TrainOutput =
        serde_json::from_str(&fs::read_to_string(dir.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.report.epochs, a.report.epochs);
    assert_eq!(report.run.seed, 0);
    assert_eq!(report.run.config_hash, config().hash());
    assert_eq!(report.run.code_version, flowcast_cli::CODE_VERSION);
    assert_eq!(report.report.model_config.lookback, 20);

    let b = train(&f, ModelKind::Lstm, "b");
    assert_eq!(
        fs::read(&a.checkpoint).unwrap(),
        fs::read(&b.checkpoint).unwrap()
    );
    let c = cmd_train(
        &f.cache,
        &f.basins[0],
        ModelKind::Lstm,
        &config().with_seed(Some(5)),
        &f.path("c"),
    )
    .unwrap();
    assert_ne!(
        fs::read(&a.checkpoint).unwrap(),
        fs::read(&c.checkpoint).unwrap()
    );
}

#[test]
fn train_rejects_unknown_basins_and_bad_configs() {
    let f = ingest_fixture(1);
    let err = cmd_train(&f.cache, "nowhere", ModelKind::Tft, &config(), &f.path("x")).unwrap_err();
    assert_eq!(err.code(), 2, "{err}");
    let err = cmd_train(
        &f.path("missing.tdx"),
        &f.basins[0],
        ModelKind::Tft,
        &config(),
        &f.path("x"),
    )
    .unwrap_err();
    assert_eq!(err.code(), 2, "{err}");

    let bad = f.path("bad.toml");
    fs::write(&bad, "[model]\nd_modle = 3\n").unwrap();
    let err = RunConfig::load(Some(&bad)).unwrap_err();
    assert_eq!(err.code(), 2);
    assert!(err.to_string().contains("d_modle"), "{err}");
}

#[test]
fn evaluate_scores_the_test_split() {
    let f = ingest_fixture(1);
    let t = train(&f, ModelKind::Transformer, "runs");
    let result = cmd_evaluate(&t.checkpoint, &f.cache, None).unwrap();
    let data = Dataset::load(&f.cache).unwrap().basins.remove(0);
    assert_eq!(result.hydrograph.len(), data.splits.test.len());
    assert!(result.kge.kge.is_finite());
    let dir = t.checkpoint.parent().unwrap();
    let hydrograph = fs::read_to_string(dir.join(HYDROGRAPH_FILE)).unwrap();
    assert_eq!(hydrograph.lines().count(), data.splits.test.len() + 1);
    let metrics = fs::read_to_string(dir.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let err = cmd_evaluate(&f.path("none.tfx"), &f.cache, None).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");
}

#[test]
fn evaluate_rejects_a_cache_with_other_inputs() {
    let f = ingest_fixture(1);
    let t = train(&f, ModelKind::Lstm, "runs");
    let mut cfg = config();
    cfg.data.calendar_features = true;
    let other = f.path("calendar.tdx");
    let data = f.path("data");
    cmd_ingest(
        &data.join(TIMESERIES_DIR),
        &data.join(ATTRIBUTES_FILE),
        &other,
        &cfg,
        &[],
    )
    .unwrap();
    let err = cmd_evaluate(&t.checkpoint, &other, Some(&f.path("eval"))).unwrap_err();
    assert_eq!(err.code(), 3);
    let msg = err.to_string();
    assert!(
        msg.contains("incompatible") && msg.contains("doy_sin") && msg.contains("doy_cos"),
        "{msg}"
    );
}

#[test]
fn interpret_writes_normalized_tables() {
    let f = ingest_fixture(1);
    let t = train(&f, ModelKind::Tft, "runs");
    let out = f.path("interp");
    let report = cmd_interpret(
        &t.checkpoint,
        &f.cache,
        Some(&out),
        BinScheme::Fixed30,
        SampleSet::Test,
    )
    .unwrap();
    let sum = |w: &[f64]| w.iter().sum::<f64>();
    let enc: Vec<f64> = report.encoder_importance.iter().map(|i| i.weight).collect();
    assert!((sum(&enc) - 1.0).abs() < 1e-9);
    let profile: Vec<f64> = report
        .attention_profile
        .iter()
        .map(|b| b.mean_pct)
        .collect();
    assert!((sum(&profile) - 100.0).abs() < 0.1);
    let files = [
        "importance.csv",
        "ranking.csv",
        "attention_profile.csv",
        "interpretation.json",
    ];
    let first: Vec<Vec<u8>> = files
        .iter()
        .map(|n| fs::read(out.join(n)).unwrap())
        .collect();
    let again = cmd_interpret(
        &t.checkpoint,
        &f.cache,
        Some(&out),
        BinScheme::Fixed30,
        SampleSet::Test,
    )
    .unwrap();
    assert_eq!(again, report);
    for (n, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(out.join(n)).unwrap(), bytes, "{n}");
    }

    let lstm = train(&f, ModelKind::Lstm, "runs");
    let err = cmd_interpret(
        &lstm.checkpoint,
        &f.cache,
        Some(&out),
        BinScheme::Fixed30,
        SampleSet::Test,
    )
    .unwrap_err();
    assert_eq!(err.code(), 2);
    assert!(err.to_string().contains("unsupported"), "{err}");
}

#[test]
fn compare_emits_per_basin_and_median_rows() {
    let f = ingest_fixture(3);
    let out = f.path("cmp");
    let c = cmd_compare(&f.cache, &f.basins[..1], &config(), &out, 1, false).unwrap();
    assert_eq!(c.rows.len(), 1);
    assert_eq!(c.results.len(), 3);
    assert!(c.rows[0].kge.iter().all(|k| k.is_finite()));
    assert_eq!(c.median, c.rows[0].kge);

    let all = cmd_compare(&f.cache, &[], &config(), &out, 2, true).unwrap();
    assert_eq!(all.rows.len(), 3);
    assert_eq!(all.rows[0], c.rows[0]);
    for k in 0..3 {
        let mut col: Vec<f64> = all.rows.iter().map(|r| r.kge[k]).collect();
        col.sort_by(f64::total_cmp);
        assert_eq!(all.median[k], col[1]);
    }
    let table = fs::read_to_string(out.join(COMPARISON_FILE)).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "basin_id,lstm,transformer,tft");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("median,"));
    assert_eq!(
        fs::read_to_string(out.join(METRICS_FILE))
            .unwrap()
            .lines()
            .count(),
        10
    );
    for b in &f.basins {
        for kind in ModelKind::ALL {
            assert!(run_dir(&out, b, kind).join(CHECKPOINT_FILE).is_file());
        }
    }
    let err =
        cmd_compare(&f.cache, &["absent".to_string()], &config(), &out, 1, false).unwrap_err();
    assert_eq!(err.code(), 2);
}

fn flowcast(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_flowcast"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    fs::write(cwd.join("run.toml"), CONFIG).unwrap();
    assert_eq!(flowcast(&[], cwd).0, 2);
    assert_eq!(
        flowcast(
            &["train", "--cache", "c.tdx", "--basin", "b", "--model", "gru"],
            cwd
        )
        .0,
        2
    );

    let (code, stdout, _) = flowcast(
        &["synth", "--out", "data", "--basins", "1", "--years", "2"],
        cwd,
    );
    assert_eq!(code, 0);
    assert!(stdout.contains("synth_000"));
    let (code, stdout, err) = flowcast(
        &[
            "ingest", "--data", "data", "--out", "c.tdx", "--config", "run.toml",
        ],
        cwd,
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("1 of 1 basins accepted"));

    fs::create_dir(cwd.join("empty")).unwrap();
    let (code, _, err) = flowcast(&["ingest", "--data", "empty", "--out", "e.tdx"], cwd);
    assert_eq!(code, 2, "{err}");
    fs::create_dir(cwd.join("empty/timeseries")).unwrap();
    fs::write(cwd.join("empty/attributes.csv"), "basin_id\n").unwrap();
    let (code, _, err) = flowcast(&["ingest", "--data", "empty", "--out", "e.tdx"], cwd);
    assert_eq!(code, 3, "{err}");

    let (code, _, err) = flowcast(
        &[
            "evaluate",
            "--checkpoint",
            "missing.tfx",
            "--cache",
            "c.tdx",
        ],
        cwd,
    );
    assert_eq!(code, 2);
    assert!(err.contains("does not exist"));
    let (code, _, err) = flowcast(
        &[
            "train",
            "--cache",
            "c.tdx",
            "--basin",
            "synth_000",
            "--model",
            "lstm",
            "--config",
            "nope.toml",
        ],
        cwd,
    );
    assert_eq!(code, 2, "{err}");

    let train = [
        "train",
        "--cache",
        "c.tdx",
        "--basin",
        "synth_000",
        "--model",
        "lstm",
        "--config",
        "run.toml",
        "--seed",
        "3",
    ];
    let (code, stdout, err) = flowcast(&train, cwd);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("checkpoint written"));
    let (code, stdout, _) = flowcast(
        &[
            "evaluate",
            "--checkpoint",
            "runs/synth_000/lstm/checkpoint.tfx",
            "--cache",
            "c.tdx",
        ],
        cwd,
    );
    assert_eq!(code, 0);
    assert!(stdout.contains("KGE"));
}
