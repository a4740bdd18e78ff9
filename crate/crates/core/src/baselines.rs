//! Comparison methods: the global fixed-weight ensemble, mean/median
//! aggregation, an unconstrained regression ensemble, per-model passthrough,
//! and externally supplied prediction files.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::ForecastDataset;
use crate::ensemble::TrainedEnsemble;
use crate::error::{Error, Result};
use crate::profile::RedundancyMatrix;
use crate::qp::{self, QpProblem, WeightVector};

/// Anything that can produce one prediction per dataset row, for the
/// comparison harness.
pub trait EvalMethod {
    fn name(&self) -> &str;
    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>>;
}

/// Fit a single simplex weight vector on the whole training set — the
/// traditional fixed-weight ensemble.
pub fn fit_global_weights(
    ds: &ForecastDataset,
    lambda: f64,
    s: &RedundancyMatrix,
) -> Result<WeightVector> {
    let problem = QpProblem::new(ds.x().to_vec(), ds.y().to_vec(), s, lambda)?;
    qp::solve_weights(&problem, qp::DEFAULT_TOL, qp::DEFAULT_MAX_ITER)
}

/// Arithmetic mean of the forecasts in a row.
pub fn predict_mean(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}

/// Lower median of the forecasts in a row (the (M-1)/2-th order statistic),
/// deterministic for even row lengths.
pub fn predict_median(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(sorted.len() - 1) / 2]
}

/// Ordinary least squares of observations on forecasts with an intercept.
/// Coefficients are unconstrained and may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionEnsemble {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Fit the regression ensemble via the normal equations, with a 1e-10 ridge
/// on the system for rank safety.
pub fn fit_regression_ensemble(ds: &ForecastDataset) -> Result<RegressionEnsemble> {
    let n = ds.n();
    let m = ds.n_models();
    if n <= m {
        return Err(Error::Underdetermined(format!(
            "regression needs more samples than models ({n} samples, {m} models)"
        )));
    }
    let p = m + 1;
    let mut ztz = DMatrix::zeros(p, p);
    let mut zty = DVector::zeros(p);
    for (row, &yi) in ds.x().iter().zip(ds.y()) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            zty[i] += z[i] * yi;
            for j in 0..p {
                ztz[(i, j)] += z[i] * z[j];
            }
        }
    }
    for i in 0..p {
        ztz[(i, i)] += 1e-10;
    }
    let beta = ztz
        .lu()
        .solve(&zty)
        .ok_or_else(|| Error::Contract("singular normal equations".into()))?;
    Ok(RegressionEnsemble {
        intercept: beta[0],
        coefficients: beta.as_slice()[1..].to_vec(),
    })
}

impl RegressionEnsemble {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Mean-aggregation baseline.
pub struct MeanBaseline;

impl EvalMethod for MeanBaseline {
    fn name(&self) -> &str {
        "mean"
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        Ok(ds.x().iter().map(|row| predict_mean(row)).collect())
    }
}

/// Median-aggregation baseline.
pub struct MedianBaseline;

impl EvalMethod for MedianBaseline {
    fn name(&self) -> &str {
        "median"
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        Ok(ds.x().iter().map(|row| predict_median(row)).collect())
    }
}

/// A single base model's forecasts taken verbatim.
pub struct SingleModel {
    pub index: usize,
    pub label: String,
}

impl EvalMethod for SingleModel {
    fn name(&self) -> &str {
        &self.label
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        if self.index >= ds.n_models() {
            return Err(Error::Contract(format!(
                "model index {} out of range for {} models",
                self.index,
                ds.n_models()
            )));
        }
        Ok(ds.x().iter().map(|row| row[self.index]).collect())
    }
}

/// Fitted global fixed weights wrapped for the comparison harness.
pub struct GlobalWeightEnsemble {
    pub weights: WeightVector,
    pub label: String,
}

impl EvalMethod for GlobalWeightEnsemble {
    fn name(&self) -> &str {
        &self.label
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        if self.weights.weights.len() != ds.n_models() {
            return Err(Error::Contract(format!(
                "global weights cover {} models, dataset has {}",
                self.weights.weights.len(),
                ds.n_models()
            )));
        }
        Ok(ds
            .x()
            .iter()
            .map(|row| self.weights.weights.iter().zip(row).map(|(w, x)| w * x).sum())
            .collect())
    }
}

impl EvalMethod for RegressionEnsemble {
    fn name(&self) -> &str {
        "regression"
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        if self.coefficients.len() != ds.n_models() {
            return Err(Error::Contract(format!(
                "regression covers {} models, dataset has {}",
                self.coefficients.len(),
                ds.n_models()
            )));
        }
        Ok(ds.x().iter().map(|row| self.predict_row(row)).collect())
    }
}

impl EvalMethod for TrainedEnsemble {
    fn name(&self) -> &str {
        "regime-ensemble"
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        self.predict_batch(ds.x())
    }
}

/// Predictions imported from a `timestamp,prediction` CSV, matched to dataset
/// rows by timestamp.
pub struct ExternalPredictions {
    label: String,
    by_timestamp: BTreeMap<String, f64>,
}

impl ExternalPredictions {
    pub fn from_csv<P: AsRef<Path>>(path: P, label: impl Into<String>) -> Result<Self> {
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
        let pred_col = headers
            .iter()
            .position(|h| h == "prediction")
            .ok_or_else(|| Error::Schema("missing `prediction` column".into()))?;
        let mut by_timestamp = BTreeMap::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let value: f64 = record[pred_col].trim().parse().map_err(|_| {
                Error::Schema(format!(
                    "row {}: cannot parse prediction {:?}",
                    line + 2,
                    &record[pred_col]
                ))
            })?;
            by_timestamp.insert(record[ts_col].trim().to_string(), value);
        }
        Ok(ExternalPredictions {
            label: label.into(),
            by_timestamp,
        })
    }
}

impl EvalMethod for ExternalPredictions {
    fn name(&self) -> &str {
        &self.label
    }

    fn predict_dataset(&self, ds: &ForecastDataset) -> Result<Vec<f64>> {
        ds.timestamps()
            .iter()
            .map(|ts| {
                self.by_timestamp.get(ts).copied().ok_or_else(|| {
                    Error::Schema(format!(
                        "external predictions {:?} missing timestamp {ts}",
                        self.label
                    ))
                })
            })
            .collect()
    }
}
