//! Dataset ingestion, standardization, temporal splitting, and synthetic data.
//!
//! A [`ForecastDataset`] holds, for one basin and one horizon, the n×M matrix
//! of base-model rainfall forecasts alongside the observed rainfall and the
//! sample timestamps. Rows are kept in strict chronological order because the
//! downstream similarity analysis treats each model's column as a time series.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast lead/accumulation period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Horizon {
    H1,
    H12,
    H24,
    H48,
    H72,
    H84,
}

impl Horizon {
    /// All horizons, in increasing order.
    pub const ALL: [Horizon; 6] = [
        Horizon::H1,
        Horizon::H12,
        Horizon::H24,
        Horizon::H48,
        Horizon::H72,
        Horizon::H84,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Horizon::H1 => "1h",
            Horizon::H12 => "12h",
            Horizon::H24 => "24h",
            Horizon::H48 => "48h",
            Horizon::H72 => "72h",
            Horizon::H84 => "84h",
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1h" => Ok(Horizon::H1),
            "12h" => Ok(Horizon::H12),
            "24h" => Ok(Horizon::H24),
            "48h" => Ok(Horizon::H48),
            "72h" => Ok(Horizon::H72),
            "84h" => Ok(Horizon::H84),
            other => Err(Error::Schema(format!(
                "unknown horizon {other:?}; expected one of 1h, 12h, 24h, 48h, 72h, 84h"
            ))),
        }
    }
}

/// Column means and standard deviations recorded at fit time so the same
/// affine transform can be replayed at inference.
///
/// Degenerate (constant) columns record a standard deviation of 1 so the
/// transform maps them to zero without dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl ScalerParams {
    /// Identity scaler for data that is already standardized.
    pub fn identity(n_features: usize) -> Self {
        ScalerParams {
            means: vec![0.0; n_features],
            stddevs: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Map a raw row into standardized space.
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::Contract(format!(
                "scaler expects {} features, got {}",
                self.means.len(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stddevs))
            .map(|(x, (mu, sd))| (x - mu) / sd)
            .collect())
    }

    /// Invert [`transform_row`](Self::transform_row).
    pub fn inverse_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::Contract(format!(
                "scaler expects {} features, got {}",
                self.means.len(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stddevs))
            .map(|(z, (mu, sd))| z * sd + mu)
            .collect())
    }
}

/// Per-horizon table of base-model forecasts and observed rainfall.
///
/// Invariants enforced at construction: equal row counts across fields,
/// at least one row and one model, unique model names, strictly increasing
/// timestamps, and no non-finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    horizon: Horizon,
    timestamps: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    model_names: Vec<String>,
    dropped_rows: usize,
}

impl ForecastDataset {
    pub fn new(
        horizon: Horizon,
        timestamps: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        model_names: Vec<String>,
    ) -> Result<Self> {
        let n = timestamps.len();
        if n == 0 {
            return Err(Error::EmptyDataset("dataset has no rows".into()));
        }
        if x.len() != n || y.len() != n {
            return Err(Error::Contract(format!(
                "row count mismatch: {} timestamps, {} forecast rows, {} observations",
                n,
                x.len(),
                y.len()
            )));
        }
        let m = model_names.len();
        if m == 0 {
            return Err(Error::Schema("dataset must have at least one model".into()));
        }
        for (i, name) in model_names.iter().enumerate() {
            if model_names[..i].contains(name) {
                return Err(Error::Schema(format!("duplicate model name {name:?}")));
            }
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Contract(format!(
                    "row {i} has {} forecasts, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
                return Err(Error::Contract(format!("non-finite value in row {i}")));
            }
        }
        for i in 1..n {
            parse_timestamp(&timestamps[i - 1])?;
            if timestamps[i - 1] >= timestamps[i] {
                return Err(Error::Ordering {
                    row: i,
                    prev: timestamps[i - 1].clone(),
                    next: timestamps[i].clone(),
                });
            }
        }
        parse_timestamp(&timestamps[n - 1])?;
        Ok(ForecastDataset {
            horizon,
            timestamps,
            x,
            y,
            model_names,
            dropped_rows: 0,
        })
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of base models.
    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    /// Forecast matrix, one row per sample.
    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Observed rainfall.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i]
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    /// One model's forecasts in chronological order.
    pub fn model_series(&self, j: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[j]).collect()
    }

    /// Rows rejected during ingestion because of non-finite values.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    /// Column-standardize the forecast matrix (population standard deviation).
    ///
    /// Constant columns map to all zeros and record a standard deviation of 1.
    pub fn standardize(&self) -> Result<(Vec<Vec<f64>>, ScalerParams)> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "standardize needs at least 2 samples, got {n}"
            )));
        }
        let m = self.n_models();
        let mut means = vec![0.0; m];
        let mut stddevs = vec![0.0; m];
        for j in 0..m {
            let mean = self.x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = self.x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means[j] = mean;
            // Degenerate-column rule: record sd 1 so the transform yields zeros.
            stddevs[j] = if sd <= 1e-12 * mean.abs().max(1.0) {
                1.0
            } else {
                sd
            };
        }
        let scaler = ScalerParams { means, stddevs };
        let standardized = self
            .x
            .iter()
            .map(|row| scaler.transform_row(row))
            .collect::<Result<Vec<_>>>()?;
        Ok((standardized, scaler))
    }

    /// Split into (train, test) along time: the first ceil(fraction * n) rows
    /// train, the remainder test.
    pub fn temporal_split(&self, train_fraction: f64) -> Result<(Self, Self)> {
        if !train_fraction.is_finite() || train_fraction <= 0.0 || train_fraction >= 1.0 {
            return Err(Error::Split(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "temporal split needs at least 2 samples, got {n}"
            )));
        }
        let n_train = (train_fraction * n as f64).ceil() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::Split(format!(
                "fraction {train_fraction} on {n} samples leaves an empty side \
                 ({n_train} train, {} test)",
                n - n_train
            )));
        }
        let take = |range: std::ops::Range<usize>| -> Result<ForecastDataset> {
            ForecastDataset::new(
                self.horizon,
                self.timestamps[range.clone()].to_vec(),
                self.x[range.clone()].to_vec(),
                self.y[range].to_vec(),
                self.model_names.clone(),
            )
        };
        Ok((take(0..n_train)?, take(n_train..n)?))
    }

    /// Keep only the rows at the given (ascending) indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        ForecastDataset::new(
            self.horizon,
            indices.iter().map(|&i| self.timestamps[i].clone()).collect(),
            indices.iter().map(|&i| self.x[i].clone()).collect(),
            indices.iter().map(|&i| self.y[i]).collect(),
            self.model_names.clone(),
        )
    }

    /// Write the dataset in the interchange CSV schema:
    /// `timestamp,<model_1>,...,<model_M>,observed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "timestamp")?;
        for name in &self.model_names {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",observed")?;
        for i in 0..self.n() {
            write!(w, "{}", self.timestamps[i])?;
            for v in &self.x[i] {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.y[i])?;
        }
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Result<()> {
    let ok = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").is_ok()
        || chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok();
    if ok {
        Ok(())
    } else {
        Err(Error::Schema(format!("unparseable ISO-8601 timestamp {s:?}")))
    }
}

/// Load a dataset from the interchange CSV schema.
///
/// The header must contain a `timestamp` column and an `observed` column;
/// every other column is treated as one base model, in header order. Rows
/// containing any non-finite value are dropped and counted, never imputed.
pub fn load_csv<P: AsRef<Path>>(path: P, horizon: Horizon) -> Result<ForecastDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| Error::Schema("missing `timestamp` column".into()))?;
    let obs_col = headers
        .iter()
        .position(|h| h == "observed")
        .ok_or_else(|| Error::Schema("missing `observed` column".into()))?;
    let model_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != ts_col && i != obs_col)
        .collect();
    if model_cols.is_empty() {
        return Err(Error::Schema("no model columns between `timestamp` and `observed`".into()));
    }
    let model_names: Vec<String> = model_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut timestamps = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            let field = record[i].trim();
            if field.is_empty() {
                return Ok(f64::NAN);
            }
            field.parse::<f64>().map_err(|_| {
                Error::Schema(format!(
                    "row {}: cannot parse {:?} in column {:?} as a number",
                    line + 2,
                    field,
                    &headers[i]
                ))
            })
        };
        let row: Vec<f64> = model_cols.iter().map(|&i| parse(i)).collect::<Result<_>>()?;
        let obs = parse(obs_col)?;
        if row.iter().any(|v| !v.is_finite()) || !obs.is_finite() {
            dropped += 1;
            continue;
        }
        timestamps.push(record[ts_col].trim().to_string());
        x.push(row);
        y.push(obs);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{} has no usable rows after dropping {dropped} with non-finite values",
            path.display()
        )));
    }
    let mut ds = ForecastDataset::new(horizon, timestamps, x, y, model_names)?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Configuration for the seeded synthetic generator.
///
/// The generator draws nonnegative "observed" rainfall from a log-normal
/// process, lays regimes out as contiguous time blocks, and gives each model
/// a regime-dependent additive bias: the regime's skilled model has zero bias,
/// the rest a fixed positive offset. Gaussian noise is added on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub n_models: usize,
    pub n_regimes: usize,
    /// Which model has zero bias in each regime; length `n_regimes`.
    pub skilled_models: Vec<usize>,
    /// Standard deviation of the per-forecast Gaussian noise (mm).
    pub noise_stddev: f64,
    /// When set, the last model column is an exact copy of the first.
    pub duplicate_model: bool,
    pub seed: u64,
    pub horizon: Horizon,
    /// Samples per contiguous regime block.
    pub regime_block_len: usize,
    /// Base magnitude of the off-regime model biases (mm).
    pub bias_scale: f64,
    /// Log-space mean of the observed-rainfall process.
    pub truth_log_mean: f64,
    /// Log-space standard deviation of the observed-rainfall process.
    pub truth_log_sigma: f64,
}

impl SyntheticConfig {
    pub fn new(n_samples: usize, n_models: usize, n_regimes: usize, seed: u64) -> Self {
        SyntheticConfig {
            n_samples,
            n_models,
            n_regimes,
            skilled_models: (0..n_regimes).map(|r| r % n_models.max(1)).collect(),
            noise_stddev: 0.5,
            duplicate_model: false,
            seed,
            horizon: Horizon::H24,
            regime_block_len: 32,
            bias_scale: 8.0,
            truth_log_mean: 0.7,
            truth_log_sigma: 0.5,
        }
    }

    /// Ground-truth regime of sample `i` (blockwise in time).
    pub fn regime_label(&self, i: usize) -> usize {
        (i / self.regime_block_len) % self.n_regimes
    }

    /// Additive bias of model `j` in regime `r`.
    pub fn bias(&self, model: usize, regime: usize) -> f64 {
        if self.skilled_models[regime] == model {
            0.0
        } else {
            self.bias_scale * (1.0 + 0.5 * ((model + 2 * regime) % 3) as f64)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_models == 0 {
            return Err(Error::Contract("n_samples and n_models must be >= 1".into()));
        }
        if self.n_regimes == 0 {
            return Err(Error::Contract("n_regimes must be >= 1".into()));
        }
        if self.skilled_models.len() != self.n_regimes {
            return Err(Error::Contract(format!(
                "skilled_models has {} entries, expected {}",
                self.skilled_models.len(),
                self.n_regimes
            )));
        }
        if self.skilled_models.iter().any(|&j| j >= self.n_models) {
            return Err(Error::Contract("skilled model index out of range".into()));
        }
        if self.noise_stddev < 0.0 {
            return Err(Error::Contract("noise_stddev must be >= 0".into()));
        }
        if self.regime_block_len == 0 {
            return Err(Error::Contract("regime_block_len must be >= 1".into()));
        }
        if self.truth_log_sigma < 0.0 {
            return Err(Error::Contract("truth_log_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Generate a seeded synthetic dataset; identical configs give bit-identical output.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<ForecastDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth_dist = LogNormal::new(cfg.truth_log_mean, cfg.truth_log_sigma)
        .map_err(|e| Error::Contract(format!("invalid truth distribution: {e}")))?;
    let noise_dist = if cfg.noise_stddev > 0.0 {
        Some(
            Normal::new(0.0, cfg.noise_stddev)
                .map_err(|e| Error::Contract(format!("invalid noise distribution: {e}")))?,
        )
    } else {
        None
    };

    let start = chrono::NaiveDate::from_ymd_opt(2023, 6, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let mut timestamps = Vec::with_capacity(cfg.n_samples);
    let mut x = Vec::with_capacity(cfg.n_samples);
    let mut y = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let ts = start + chrono::Duration::hours(i as i64);
        timestamps.push(ts.format("%Y-%m-%dT%H:%M:%S").to_string());
        let truth = truth_dist.sample(&mut rng);
        let regime = cfg.regime_label(i);
        let mut row = Vec::with_capacity(cfg.n_models);
        for j in 0..cfg.n_models {
            let noise = match &noise_dist {
                Some(d) => d.sample(&mut rng),
                None => 0.0,
            };
            row.push(truth + cfg.bias(j, regime) + noise);
        }
        if cfg.duplicate_model && cfg.n_models >= 2 {
            row[cfg.n_models - 1] = row[0];
        }
        x.push(row);
        y.push(truth);
    }

    let model_names = (1..=cfg.n_models).map(|j| format!("model_{j}")).collect();
    ForecastDataset::new(cfg.horizon, timestamps, x, y, model_names)
}
