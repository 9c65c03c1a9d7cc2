use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flowcast::data::{SynthConfig, ATTRIBUTES_FILE, TIMESERIES_DIR};
use flowcast::interpret::BinScheme;
use flowcast::models::ModelKind;
use flowcast_cli::{
    cmd_compare, cmd_evaluate, cmd_ingest, cmd_interpret, cmd_synth, cmd_train, CliResult,
    RunConfig, SampleSet,
};

#[derive(Parser)]
#[command(
    name = "flowcast",
    version,
    about = "Train and compare LSTM, Transformer and TFT streamflow forecasters"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Lstm,
    Transformer,
    Tft,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Lstm => ModelKind::Lstm,
            Model::Transformer => ModelKind::Transformer,
            Model::Tft => ModelKind::Tft,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Bins {
    Fixed30,
    Calendar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic data directory (attributes table plus one series per basin).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        basins: usize,
        #[arg(long, default_value_t = 15)]
        years: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.002)]
        gap_rate: f64,
    },
    /// Screen, fill and window basins into a cache.
    Ingest {
        /// Data directory holding `attributes.csv` and `timeseries/`.
        #[arg(long, required_unless_present = "timeseries")]
        data: Option<PathBuf>,
        /// Directory of per-basin series files.
        #[arg(long, requires = "attributes")]
        timeseries: Option<PathBuf>,
        /// Static attributes table.
        #[arg(long)]
        attributes: Option<PathBuf>,
        /// Cache file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to these basins (repeatable).
        #[arg(long)]
        basin: Vec<String>,
    },
    /// Train one model on one cached basin.
    Train {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        basin: String,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split of its basin.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Output directory (default: next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variable importance and attention profile of a TFT checkpoint.
    Interpret {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fixed30")]
        bins: Bins,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Train and evaluate all three models on each basin.
    Compare {
        #[arg(long)]
        cache: PathBuf,
        /// Restrict to these basins (repeatable; default: all cached basins).
        #[arg(long)]
        basin: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Basins trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Reload checkpoints trained with the same configuration.
        #[arg(long)]
        reuse: bool,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth {
            out,
            basins,
            years,
            seed,
            gap_rate,
        } => {
            let config = SynthConfig {
                n_basins: basins,
                years,
                seed,
                gap_rate,
                ..SynthConfig::default()
            };
            let ids = cmd_synth(&out, &config)?;
            println!(
                "wrote {} basins to {}: {}",
                ids.len(),
                out.display(),
                ids.join(", ")
            );
        }
        Command::Ingest {
            data,
            timeseries,
            attributes,
            out,
            config,
            basin,
        } => {
            let config = RunConfig::load(config.as_deref())?;
            let timeseries =
                timeseries.unwrap_or_else(|| data.clone().unwrap_or_default().join(TIMESERIES_DIR));
            let attributes =
                attributes.unwrap_or_else(|| data.unwrap_or_default().join(ATTRIBUTES_FILE));
            let summary = cmd_ingest(&timeseries, &attributes, &out, &config, &basin)?;
            print!("{}", summary.table());
            println!("cache written to {}", out.display());
        }
        Command::Train {
            cache,
            basin,
            model,
            config,
            seed,
            out,
        } => {
            let config = RunConfig::load(config.as_deref())?.with_seed(seed);
            let output = cmd_train(&cache, &basin, model.into(), &config, &out)?;
            let r = &output.report;
            println!(
                "{} on {}: best epoch {} of {}, validation loss {:.6}",
                r.model_kind, r.basin_id, r.best_epoch, r.stopped_epoch, r.best_val_loss
            );
            println!("checkpoint written to {}", output.checkpoint.display());
        }
        Command::Evaluate {
            checkpoint,
            cache,
            out,
        } => {
            let result = cmd_evaluate(&checkpoint, &cache, out.as_deref())?;
            let k = &result.kge;
            println!(
                "{} on {}: KGE {:.4} (r {:.4}, alpha {:.4}, beta {:.4}) over {} test days",
                result.model_kind,
                result.basin_id,
                k.kge,
                k.r,
                k.alpha,
                k.beta,
                result.hydrograph.len()
            );
        }
        Command::Interpret {
            checkpoint,
            cache,
            out,
            bins,
            split,
        } => {
            let scheme = match bins {
                Bins::Fixed30 => BinScheme::Fixed30,
                Bins::Calendar => BinScheme::Calendar,
            };
            let samples = match split {
                Split::Test => SampleSet::Test,
                Split::All => SampleSet::All,
            };
            let report = cmd_interpret(&checkpoint, &cache, out.as_deref(), scheme, samples)?;
            println!(
                "basin {} over {} samples",
                report.basin_id, report.sample_count
            );
            for (k, r) in report.merged_ranking.iter().enumerate() {
                println!(
                    "{:>3}  {:<16} {:<8} {:.4}",
                    k + 1,
                    r.variable,
                    r.group,
                    r.weight
                );
            }
            for b in &report.attention_profile {
                println!("{:<12} {:>7.2}%", b.label, b.mean_pct);
            }
        }
        Command::Compare {
            cache,
            basin,
            config,
            seed,
            out,
            jobs,
            reuse,
        } => {
            let config = RunConfig::load(config.as_deref())?.with_seed(seed);
            let comparison = cmd_compare(&cache, &basin, &config, &out, jobs, reuse)?;
            print!("{}", comparison.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
