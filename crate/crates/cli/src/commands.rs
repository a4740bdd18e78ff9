//! Implementations of the six subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use regime_ensemble::baselines::{
    fit_global_weights, fit_regression_ensemble, EvalMethod, ExternalPredictions,
    GlobalWeightEnsemble, MeanBaseline, MedianBaseline, SingleModel,
};
use regime_ensemble::data::{generate_synthetic, load_csv, ForecastDataset, SyntheticConfig};
use regime_ensemble::ensemble::{fit, tune_grid, Hyperparams, TrainedEnsemble};
use regime_ensemble::metrics::{comparison_table, mae_by_regime, mae_extremes};
use regime_ensemble::profile::{ab_join_profile, redundancy_matrix};

use crate::config::{
    load_grid, parse_horizon, resolve, write_atomic, FileConfig, Manifest,
};
use crate::{EvaluateArgs, GenerateArgs, InspectArgs, PredictArgs, TrainArgs, TuneArgs};

const DEFAULT_HORIZON: &str = "24h";
const DEFAULT_CLUSTERS: usize = 3;
const DEFAULT_WINDOW: usize = 10;
const DEFAULT_LAMBDA: f64 = 0.1;
const DEFAULT_SEED: u64 = 0;
const DEFAULT_FOLDS: usize = 5;
const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
const DEFAULT_EXTREME_PERCENTILE: f64 = 90.0;

pub fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let horizon_label = resolve(args.horizon, file.horizon, DEFAULT_HORIZON.into());
    let seed = resolve(args.seed, file.seed, DEFAULT_SEED);

    let mut cfg = SyntheticConfig::new(args.samples, args.models, args.regimes, seed);
    cfg.noise_stddev = args.noise;
    cfg.duplicate_model = args.duplicate_model;
    cfg.regime_block_len = args.block_len;
    cfg.horizon = parse_horizon(&horizon_label)?;
    let ds = generate_synthetic(&cfg)?;

    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    write_atomic(&args.output, &csv)?;

    #[derive(Serialize)]
    struct Echo {
        output: PathBuf,
        synthetic: SyntheticConfig,
    }
    Manifest::new(
        "generate",
        Echo {
            output: args.output.clone(),
            synthetic: cfg,
        },
    )
    .write_next_to(&args.output, false)?;
    eprintln!(
        "wrote {} ({} rows, {} models)",
        args.output.display(),
        ds.n(),
        ds.n_models()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainEcho {
    input: PathBuf,
    output: PathBuf,
    horizon: String,
    hyperparams: Hyperparams,
    train_fraction: f64,
}

fn resolved_hyperparams(
    clusters: Option<usize>,
    window: Option<usize>,
    lambda: Option<f64>,
    seed: Option<u64>,
    file: &FileConfig,
) -> Hyperparams {
    Hyperparams::new(
        resolve(clusters, file.clusters, DEFAULT_CLUSTERS),
        resolve(window, file.window, DEFAULT_WINDOW),
        resolve(lambda, file.lambda, DEFAULT_LAMBDA),
        resolve(seed, file.seed, DEFAULT_SEED),
    )
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let horizon_label = resolve(args.horizon, file.horizon.clone(), DEFAULT_HORIZON.into());
    let horizon = parse_horizon(&horizon_label)?;
    let hp = resolved_hyperparams(args.clusters, args.window, args.lambda, args.seed, &file);
    let fraction = resolve(args.train_fraction, file.train_fraction, 1.0);

    let ds = load_csv(&args.input, horizon)?;
    report_dropped(&ds, &args.input);
    let train_ds = split_for_training(&ds, fraction)?;
    let ens = fit(&train_ds, &hp)?;
    write_atomic(&args.output, ens.to_json()?.as_bytes())?;

    Manifest::new(
        "train",
        TrainEcho {
            input: args.input.clone(),
            output: args.output.clone(),
            horizon: horizon_label,
            hyperparams: hp,
            train_fraction: fraction,
        },
    )
    .write_next_to(&args.output, false)?;
    eprintln!(
        "trained on {} rows; model written to {}",
        train_ds.n(),
        args.output.display()
    );
    Ok(())
}

fn split_for_training(ds: &ForecastDataset, fraction: f64) -> anyhow::Result<ForecastDataset> {
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        anyhow::bail!("train fraction must lie in (0, 1], got {fraction}");
    }
    if fraction == 1.0 {
        Ok(ds.clone())
    } else {
        let (train, _) = ds.temporal_split(fraction)?;
        Ok(train)
    }
}

fn report_dropped(ds: &ForecastDataset, path: &Path) {
    if ds.dropped_rows() > 0 {
        eprintln!(
            "note: dropped {} row(s) with non-finite values from {}",
            ds.dropped_rows(),
            path.display()
        );
    }
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let ens = TrainedEnsemble::load(&args.model)?;
    let ds = load_csv(&args.input, ens.horizon)?;
    report_dropped(&ds, &args.input);
    if ds.model_names() != ens.model_names {
        anyhow::bail!(
            "dataset models {:?} do not match model file {:?}",
            ds.model_names(),
            ens.model_names
        );
    }
    let preds = ens.predict_batch(ds.x())?;
    let mut out = String::from("timestamp,prediction\n");
    for (ts, p) in ds.timestamps().iter().zip(&preds) {
        writeln!(out, "{ts},{p}")?;
    }
    write_atomic(&args.output, out.as_bytes())?;

    #[derive(Serialize)]
    struct Echo {
        input: PathBuf,
        model: PathBuf,
        output: PathBuf,
        rows: usize,
    }
    Manifest::new(
        "predict",
        Echo {
            input: args.input.clone(),
            model: args.model.clone(),
            output: args.output.clone(),
            rows: preds.len(),
        },
    )
    .write_next_to(&args.output, false)?;
    eprintln!("wrote {} predictions to {}", preds.len(), args.output.display());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let horizon_label = resolve(args.horizon, file.horizon.clone(), DEFAULT_HORIZON.into());
    let horizon = parse_horizon(&horizon_label)?;
    let hp = resolved_hyperparams(args.clusters, args.window, args.lambda, args.seed, &file);
    let fraction = resolve(args.train_fraction, file.train_fraction, DEFAULT_TRAIN_FRACTION);
    let percentile = resolve(
        args.extreme_percentile,
        file.extreme_percentile,
        DEFAULT_EXTREME_PERCENTILE,
    );

    let ds = load_csv(&args.input, horizon)?;
    report_dropped(&ds, &args.input);
    let (train, test) = ds.temporal_split(fraction)?;

    let ens = fit(&train, &hp)?;
    let series: Vec<Vec<f64>> = (0..train.n_models()).map(|j| train.model_series(j)).collect();
    let s = redundancy_matrix(&series, hp.window)?;
    let global = GlobalWeightEnsemble {
        weights: fit_global_weights(&train, hp.lambda, &s)?,
        label: "fixed-weights".into(),
    };
    let regression = fit_regression_ensemble(&train)?;
    let singles: Vec<SingleModel> = train
        .model_names()
        .iter()
        .enumerate()
        .map(|(index, name)| SingleModel {
            index,
            label: name.clone(),
        })
        .collect();
    let externals = args
        .external
        .iter()
        .map(|arg| load_external(arg))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut methods: Vec<&dyn EvalMethod> = vec![&ens, &global, &regression, &MeanBaseline, &MedianBaseline];
    for single in &singles {
        methods.push(single);
    }
    for external in &externals {
        methods.push(external);
    }

    let table = comparison_table(&methods, std::slice::from_ref(&test))?;
    write_atomic(&args.output.join("report.csv"), table.to_csv().as_bytes())?;
    write_atomic(&args.output.join("table.txt"), table.to_text().as_bytes())?;

    let mut extremes = String::from("method,overall_mae,extreme_mae,percentile\n");
    for method in &methods {
        let preds = method.predict_dataset(&test)?;
        let (overall, extreme) = mae_extremes(&preds, test.y(), percentile)?;
        writeln!(extremes, "{},{overall},{extreme},{percentile}", method.name())?;
    }
    write_atomic(&args.output.join("extremes.csv"), extremes.as_bytes())?;

    let breakdown = mae_by_regime(&ens, &test)?;
    let mut regimes = String::from("regime,mae,count\n");
    for row in &breakdown.rows {
        writeln!(regimes, "regime_{},{},{}", row.cluster + 1, row.mae, row.count)?;
    }
    write_atomic(&args.output.join("regimes.csv"), regimes.as_bytes())?;

    #[derive(Serialize)]
    struct Echo {
        input: PathBuf,
        output: PathBuf,
        horizon: String,
        hyperparams: Hyperparams,
        train_fraction: f64,
        extreme_percentile: f64,
        external: Vec<String>,
    }
    Manifest::new(
        "evaluate",
        Echo {
            input: args.input.clone(),
            output: args.output.clone(),
            horizon: horizon_label,
            hyperparams: hp,
            train_fraction: fraction,
            extreme_percentile: percentile,
            external: args.external.clone(),
        },
    )
    .write_next_to(&args.output, true)?;
    eprintln!(
        "evaluated {} methods on {} held-out rows; reports in {}",
        methods.len(),
        test.n(),
        args.output.display()
    );
    Ok(())
}

/// `NAME=PATH` or bare `PATH` (file stem becomes the method name).
fn load_external(arg: &str) -> anyhow::Result<ExternalPredictions> {
    let (label, path) = match arg.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(arg);
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("external")
                .to_string();
            (stem, path)
        }
    };
    ExternalPredictions::from_csv(&path, label)
        .with_context(|| format!("loading external predictions {arg:?}"))
}

pub fn tune(args: TuneArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let horizon_label = resolve(args.horizon, file.horizon.clone(), DEFAULT_HORIZON.into());
    let horizon = parse_horizon(&horizon_label)?;
    let folds = resolve(args.folds, file.folds, DEFAULT_FOLDS);
    let seed = resolve(args.seed, file.seed, DEFAULT_SEED);
    let grid = load_grid(args.grid.as_deref())?;

    let ds = load_csv(&args.input, horizon)?;
    report_dropped(&ds, &args.input);
    let (best, table) = tune_grid(&ds, &grid, folds, seed)?;

    let best_row = table
        .iter()
        .find(|r| {
            (r.n_clusters, r.window, r.lambda) == (best.n_clusters, best.window, best.lambda)
        })
        .expect("best point is in the table");
    #[derive(Serialize)]
    struct Best<'a> {
        hyperparams: &'a Hyperparams,
        cv_mse: f64,
    }
    let best_json = serde_json::to_string_pretty(&Best {
        hyperparams: &best,
        cv_mse: best_row.cv_mse,
    })?;
    write_atomic(&args.output.join("best.json"), best_json.as_bytes())?;

    let mut scores = String::from("clusters,window,lambda,cv_mse\n");
    for row in &table {
        writeln!(
            scores,
            "{},{},{},{}",
            row.n_clusters, row.window, row.lambda, row.cv_mse
        )?;
    }
    write_atomic(&args.output.join("scores.csv"), scores.as_bytes())?;

    #[derive(Serialize)]
    struct Echo {
        input: PathBuf,
        output: PathBuf,
        horizon: String,
        folds: usize,
        seed: u64,
        grid: regime_ensemble::ensemble::HyperGrid,
    }
    Manifest::new(
        "tune",
        Echo {
            input: args.input.clone(),
            output: args.output.clone(),
            horizon: horizon_label,
            folds,
            seed,
            grid,
        },
    )
    .write_next_to(&args.output, true)?;
    eprintln!(
        "tuned over {} grid points; best (K={}, m={}, lambda={}) with CV-MSE {}",
        table.len(),
        best.n_clusters,
        best.window,
        best.lambda,
        best_row.cv_mse
    );
    Ok(())
}

pub fn inspect(args: InspectArgs) -> anyhow::Result<()> {
    let ens = TrainedEnsemble::load(&args.model)?;

    let mut redundancy = String::from("model");
    for name in &ens.model_names {
        write!(redundancy, ",{name}")?;
    }
    redundancy.push('\n');
    for (i, name) in ens.model_names.iter().enumerate() {
        write!(redundancy, "{name}")?;
        for j in 0..ens.n_models() {
            write!(redundancy, ",{}", ens.redundancy.get(i, j))?;
        }
        redundancy.push('\n');
    }
    write_atomic(&args.output.join("redundancy.csv"), redundancy.as_bytes())?;

    let mut weights = String::from("regime");
    for name in &ens.model_names {
        write!(weights, ",{name}")?;
    }
    weights.push('\n');
    for (k, wv) in ens.weights.iter().enumerate() {
        write!(weights, "regime_{}", k + 1)?;
        for w in &wv.weights {
            write!(weights, ",{w}")?;
        }
        weights.push('\n');
    }
    write_atomic(&args.output.join("weights.csv"), weights.as_bytes())?;

    let mut profiled = false;
    if let Some(input) = &args.input {
        let ds = load_csv(input, ens.horizon)?;
        if ds.model_names() != ens.model_names {
            anyhow::bail!(
                "dataset models {:?} do not match model file {:?}",
                ds.model_names(),
                ens.model_names
            );
        }
        let m = ens.hyperparams.window;
        let series: Vec<Vec<f64>> = (0..ds.n_models()).map(|j| ds.model_series(j)).collect();
        let mut profiles = String::from("model_a,model_b,position,distance\n");
        for i in 0..series.len() {
            for j in 0..series.len() {
                if i == j {
                    continue;
                }
                let profile = ab_join_profile(&series[i], &series[j], m)?;
                for (pos, d) in profile.distances.iter().enumerate() {
                    writeln!(
                        profiles,
                        "{},{},{pos},{d}",
                        ens.model_names[i], ens.model_names[j]
                    )?;
                }
            }
        }
        write_atomic(&args.output.join("profiles.csv"), profiles.as_bytes())?;
        profiled = true;
    }

    #[derive(Serialize)]
    struct Echo {
        model: PathBuf,
        output: PathBuf,
        input: Option<PathBuf>,
        profiles_written: bool,
    }
    Manifest::new(
        "inspect",
        Echo {
            model: args.model.clone(),
            output: args.output.clone(),
            input: args.input.clone(),
            profiles_written: profiled,
        },
    )
    .write_next_to(&args.output, true)?;
    eprintln!("inspection CSVs written to {}", args.output.display());
    Ok(())
}
