//! Single-binary pipeline: synthetic data generation, training, prediction,
//! evaluation, hyperparameter tuning, and model inspection.
//!
//! Exit codes: 0 success, 1 runtime failure (single-line `error: ...` on
//! stderr), 2 usage error. `REGIME_ENSEMBLE_THREADS` caps worker threads.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "regime-ensemble",
    version,
    about = "Regime-switching multi-model rainfall forecast combination"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic forecast dataset as CSV.
    Generate(GenerateArgs),
    /// Fit an ensemble on a dataset and save it as versioned JSON.
    Train(TrainArgs),
    /// Apply a saved model to a dataset, writing `timestamp,prediction` CSV.
    Predict(PredictArgs),
    /// Fit on a training split and score all methods on the held-out split.
    Evaluate(EvaluateArgs),
    /// Cross-validated grid search over hyperparameters.
    Tune(TuneArgs),
    /// Dump a saved model's redundancy matrix and per-regime weights as CSV.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 480)]
    samples: usize,
    /// Number of base models.
    #[arg(long, default_value_t = 3)]
    models: usize,
    /// Number of ground-truth regimes.
    #[arg(long, default_value_t = 2)]
    regimes: usize,
    /// Forecast noise standard deviation (mm).
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Copy the first model into the last column.
    #[arg(long, default_value_t = false)]
    duplicate_model: bool,
    /// Samples per contiguous regime block.
    #[arg(long, default_value_t = 32)]
    block_len: usize,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Input dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output model JSON path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    horizon: Option<String>,
    /// Number of regimes (K).
    #[arg(long)]
    clusters: Option<usize>,
    /// Matrix-profile window (m).
    #[arg(long)]
    window: Option<usize>,
    /// Redundancy regularization strength.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on the first ceil(fraction*n) rows only; 1.0 uses every row.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Input dataset CSV (same schema as training data).
    #[arg(long)]
    input: PathBuf,
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output predictions CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Input dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for the report files.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Temporal train fraction for the fit/score split.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Percentile defining extreme events.
    #[arg(long)]
    extreme_percentile: Option<f64>,
    /// Score an external `timestamp,prediction` CSV too; NAME=PATH or PATH.
    #[arg(long = "external", value_name = "NAME=PATH")]
    external: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Input dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for best-config JSON and the score table.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    horizon: Option<String>,
    /// Number of contiguous cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with `clusters`, `windows`, `lambdas` arrays.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for the CSV dumps.
    #[arg(long)]
    output: PathBuf,
    /// Dataset CSV; when given, per-pair join profiles are dumped too.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // help/version exit 0, usage errors exit 2
    };

    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }

    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Tune(args) => commands::tune(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Honor `REGIME_ENSEMBLE_THREADS`; results do not depend on the worker
/// count, only speed does.
fn init_thread_pool() -> anyhow::Result<Option<usize>> {
    match std::env::var("REGIME_ENSEMBLE_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| anyhow::anyhow!("REGIME_ENSEMBLE_THREADS={raw:?} is not a thread count"))?;
            if n == 0 {
                anyhow::bail!("REGIME_ENSEMBLE_THREADS must be >= 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
