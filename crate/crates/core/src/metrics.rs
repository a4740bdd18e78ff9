//! Verification metrics: per-horizon error statistics, overall-vs-extreme
//! MAE, per-regime MAE, and the multi-method comparison table.

use serde::{Deserialize, Serialize};

use crate::baselines::EvalMethod;
use crate::data::{ForecastDataset, Horizon};
use crate::ensemble::TrainedEnsemble;
use crate::error::{Error, Result};

/// Mean absolute error and population standard deviation of signed errors
/// for one method on one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_abs_error: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub horizon: Horizon,
    pub method_name: String,
}

/// Compute [`ErrorStats`] from aligned prediction/observation slices.
pub fn error_stats(
    predictions: &[f64],
    observations: &[f64],
    horizon: Horizon,
    method: &str,
) -> Result<ErrorStats> {
    if predictions.len() != observations.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("error stats need at least one sample".into()));
    }
    let n = predictions.len() as f64;
    let signed: Vec<f64> = observations
        .iter()
        .zip(predictions)
        .map(|(y, p)| y - p)
        .collect();
    let mae = signed.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean_err = signed.iter().sum::<f64>() / n;
    let var = signed.iter().map(|e| (e - mean_err) * (e - mean_err)).sum::<f64>() / n;
    Ok(ErrorStats {
        mean_abs_error: mae,
        std_error: var.sqrt(),
        n_samples: predictions.len(),
        horizon,
        method_name: method.to_string(),
    })
}

/// Nearest-rank percentile of the observations (1-based ceil rank).
fn percentile_threshold(values: &[f64], percentile: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// MAE over all samples and over the extreme subset: observations strictly
/// above the given percentile of observations.
pub fn mae_extremes(
    predictions: &[f64],
    observations: &[f64],
    percentile: f64,
) -> Result<(f64, f64)> {
    if predictions.len() != observations.len() || predictions.is_empty() {
        return Err(Error::Contract("aligned non-empty slices required".into()));
    }
    if !(percentile > 50.0 && percentile < 100.0) {
        return Err(Error::Contract(format!(
            "percentile must lie in (50, 100), got {percentile}"
        )));
    }
    let threshold = percentile_threshold(observations, percentile);
    let mut overall = 0.0;
    let mut extreme = 0.0;
    let mut n_extreme = 0usize;
    for (p, y) in predictions.iter().zip(observations) {
        let abs_err = (y - p).abs();
        overall += abs_err;
        if *y > threshold {
            extreme += abs_err;
            n_extreme += 1;
        }
    }
    if n_extreme == 0 {
        return Err(Error::Subset(format!(
            "no observations strictly above the {percentile}th percentile ({threshold})"
        )));
    }
    Ok((
        overall / predictions.len() as f64,
        extreme / n_extreme as f64,
    ))
}

/// Per-regime MAE of a fitted ensemble on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeBreakdown {
    pub rows: Vec<RegimeErrorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeErrorRow {
    pub cluster: usize,
    pub mae: f64,
    pub count: usize,
}

impl RegimeBreakdown {
    pub fn total_count(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }
}

/// Group absolute prediction errors by assigned regime. Regimes with no
/// samples are omitted; the remaining counts partition the dataset.
pub fn mae_by_regime(ens: &TrainedEnsemble, ds: &ForecastDataset) -> Result<RegimeBreakdown> {
    let k = ens.n_clusters();
    let mut abs_sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for i in 0..ds.n() {
        let c = ens.assign_raw(ds.row(i))?;
        let pred = ens.predict(ds.row(i))?;
        abs_sums[c] += (ds.y()[i] - pred).abs();
        counts[c] += 1;
    }
    let rows = (0..k)
        .filter(|&c| counts[c] > 0)
        .map(|c| RegimeErrorRow {
            cluster: c,
            mae: abs_sums[c] / counts[c] as f64,
            count: counts[c],
        })
        .collect();
    Ok(RegimeBreakdown { rows })
}

/// MAE and error-std tables for several methods across several horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub horizons: Vec<Horizon>,
    /// `mae[method][horizon]`
    pub mae: Vec<Vec<f64>>,
    /// `std_err[method][horizon]`
    pub std_err: Vec<Vec<f64>>,
    /// `n[method][horizon]`
    pub n: Vec<Vec<usize>>,
}

/// Score every method on every per-horizon test dataset.
pub fn comparison_table(
    methods: &[&dyn EvalMethod],
    datasets: &[ForecastDataset],
) -> Result<ComparisonTable> {
    if methods.is_empty() || datasets.is_empty() {
        return Err(Error::Contract("need at least one method and one dataset".into()));
    }
    let mut mae = Vec::with_capacity(methods.len());
    let mut std_err = Vec::with_capacity(methods.len());
    let mut n = Vec::with_capacity(methods.len());
    for method in methods {
        let mut mae_row = Vec::with_capacity(datasets.len());
        let mut std_row = Vec::with_capacity(datasets.len());
        let mut n_row = Vec::with_capacity(datasets.len());
        for ds in datasets {
            let preds = method.predict_dataset(ds)?;
            let stats = error_stats(&preds, ds.y(), ds.horizon(), method.name())?;
            mae_row.push(stats.mean_abs_error);
            std_row.push(stats.std_error);
            n_row.push(stats.n_samples);
        }
        mae.push(mae_row);
        std_err.push(std_row);
        n.push(n_row);
    }
    Ok(ComparisonTable {
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        horizons: datasets.iter().map(|d| d.horizon()).collect(),
        mae,
        std_err,
        n,
    })
}

impl ComparisonTable {
    /// Long-format CSV: `method,horizon,mae,std_err,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,horizon,mae,std_err,n\n");
        for (i, method) in self.methods.iter().enumerate() {
            for (j, horizon) in self.horizons.iter().enumerate() {
                out.push_str(&format!(
                    "{method},{horizon},{},{},{}\n",
                    self.mae[i][j], self.std_err[i][j], self.n[i][j]
                ));
            }
        }
        out
    }

    /// Aligned text rendering with the best (lowest) value per column
    /// flagged with `*`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (title, table) in [("MAE (mm)", &self.mae), ("error std (mm)", &self.std_err)] {
            out.push_str(title);
            out.push('\n');
            let name_width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
            out.push_str(&format!("{:<name_width$}", "method"));
            for h in &self.horizons {
                out.push_str(&format!(" {:>10}", h.label()));
            }
            out.push('\n');
            let best: Vec<f64> = (0..self.horizons.len())
                .map(|j| {
                    (0..self.methods.len())
                        .map(|i| table[i][j])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            for (i, method) in self.methods.iter().enumerate() {
                out.push_str(&format!("{method:<name_width$}"));
                for j in 0..self.horizons.len() {
                    let flag = if table[i][j] == best[j] { "*" } else { " " };
                    out.push_str(&format!(" {:>9.4}{flag}", table[i][j]));
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}
