//! The end-to-end regime-switching ensemble: standardize, cluster, build the
//! redundancy matrix, fit per-regime simplex weights, and route new samples
//! to the nearest regime for prediction.
//!
//! Clustering runs in standardized feature space; weight fitting and
//! prediction stay in raw forecast units so outputs remain physical
//! (millimeters in, millimeters out). The redundancy matrix is built from the
//! training-period model series only and frozen at inference.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cluster::{self, RegimeModel};
use crate::data::{ForecastDataset, Horizon};
use crate::error::{Error, Result};
use crate::profile::{redundancy_matrix, RedundancyMatrix};
use crate::qp::{solve_weights, QpProblem, WeightVector};

/// Version tag written into every persisted model.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// One point in hyperparameter space plus solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_clusters: usize,
    /// Matrix-profile subsequence length.
    pub window: usize,
    /// Redundancy regularization strength.
    pub lambda: f64,
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Hyperparams {
    pub fn new(n_clusters: usize, window: usize, lambda: f64, seed: u64) -> Self {
        Hyperparams {
            n_clusters,
            window,
            lambda,
            seed,
            kmeans_max_iter: cluster::DEFAULT_MAX_ITER,
            kmeans_tol: cluster::DEFAULT_TOL,
            solver_tol: crate::qp::DEFAULT_TOL,
            solver_max_iter: crate::qp::DEFAULT_MAX_ITER,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::Contract("n_clusters must be >= 1".into()));
        }
        if self.window < crate::profile::MIN_WINDOW {
            return Err(Error::Contract(format!(
                "window must be >= {}, got {}",
                crate::profile::MIN_WINDOW,
                self.window
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Contract(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams::new(3, 10, 0.1, 0)
    }
}

/// Hyperparameter search space for [`tune_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub clusters: Vec<usize>,
    pub windows: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            clusters: vec![2, 3, 5],
            windows: vec![5, 10, 20],
            lambdas: vec![0.01, 0.1, 1.0],
        }
    }
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.clusters.len() * self.windows.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in (clusters, window, lambda) iteration order.
    fn points(&self, seed: u64) -> Vec<Hyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &k in &self.clusters {
            for &m in &self.windows {
                for &lambda in &self.lambdas {
                    out.push(Hyperparams::new(k, m, lambda, seed));
                }
            }
        }
        out
    }
}

/// One row of the tuner's score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub n_clusters: usize,
    pub window: usize,
    pub lambda: f64,
    pub cv_mse: f64,
}

/// Training diagnostics captured at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_train: usize,
    pub cluster_counts: Vec<usize>,
    pub train_mse: f64,
    pub train_mae: f64,
}

/// A fitted ensemble, serializable as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub schema_version: u32,
    pub horizon: Horizon,
    pub model_names: Vec<String>,
    pub hyperparams: Hyperparams,
    pub regime: RegimeModel,
    /// One simplex weight vector per regime.
    pub weights: Vec<WeightVector>,
    pub redundancy: RedundancyMatrix,
    pub training: TrainingSummary,
}

impl TrainedEnsemble {
    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.weights.len()
    }

    /// Predict rainfall for one raw forecast row: standardize, assign to the
    /// nearest regime, and apply that regime's weights to the raw forecasts.
    pub fn predict(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.n_models() {
            return Err(Error::Contract(format!(
                "predict expects {} forecasts, got {}",
                self.n_models(),
                x_raw.len()
            )));
        }
        if x_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("predict requires finite forecasts".into()));
        }
        let std_row = self.regime.scaler().transform_row(x_raw)?;
        let c = self.regime.assign(&std_row)?;
        Ok(self.weights[c]
            .weights
            .iter()
            .zip(x_raw)
            .map(|(w, x)| w * x)
            .sum())
    }

    /// Row-wise [`predict`](Self::predict) over a batch, order-preserving.
    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|row| self.predict(row)).collect()
    }

    /// Regime index for one raw forecast row.
    pub fn assign_raw(&self, x_raw: &[f64]) -> Result<usize> {
        let std_row = self.regime.scaler().transform_row(x_raw)?;
        self.regime.assign(&std_row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionProbe {
            schema_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                found: probe.schema_version,
            });
        }
        let ens: TrainedEnsemble = serde_json::from_str(text)?;
        ens.check_consistency()?;
        Ok(ens)
    }

    /// Cross-field shape checks for models arriving from disk.
    fn check_consistency(&self) -> Result<()> {
        let m = self.n_models();
        if m == 0 {
            return Err(Error::Contract("model file has no model names".into()));
        }
        if self.weights.is_empty() || self.weights.len() != self.regime.n_clusters() {
            return Err(Error::Contract(format!(
                "model file has {} weight rows for {} regimes",
                self.weights.len(),
                self.regime.n_clusters()
            )));
        }
        if self.regime.n_features() != m || self.redundancy.dim() != m {
            return Err(Error::Contract(format!(
                "model file mixes {m} models with {}-wide centroids and a {}x{} penalty",
                self.regime.n_features(),
                self.redundancy.dim(),
                self.redundancy.dim()
            )));
        }
        for (k, wv) in self.weights.iter().enumerate() {
            if wv.weights.len() != m || !wv.is_feasible() {
                return Err(Error::Contract(format!(
                    "model file weight row {k} is not a valid {m}-simplex point"
                )));
            }
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Fit the full ensemble on a training dataset.
pub fn fit(ds: &ForecastDataset, hp: &Hyperparams) -> Result<TrainedEnsemble> {
    hp.validate()?;
    let n = ds.n();
    let needed = hp.n_clusters.max(hp.window);
    if n < needed {
        return Err(Error::Infeasible(format!(
            "{n} training samples cannot support n_clusters {} and window {} \
             (need n >= {needed})",
            hp.n_clusters, hp.window
        )));
    }

    let (x_std, scaler) = ds.standardize().map_err(|e| e.in_stage("standardize"))?;

    let regime = cluster::fit_kmeans(
        &x_std,
        hp.n_clusters,
        hp.seed,
        hp.kmeans_max_iter,
        hp.kmeans_tol,
    )
    .map_err(|e| e.in_stage("cluster"))?
    .with_scaler(scaler);

    let series: Vec<Vec<f64>> = (0..ds.n_models()).map(|j| ds.model_series(j)).collect();
    let redundancy = redundancy_matrix(&series, hp.window).map_err(|e| e.in_stage("redundancy"))?;

    let mut assignments = Vec::with_capacity(n);
    for row in &x_std {
        assignments.push(regime.assign(row).map_err(|e| e.in_stage("cluster"))?);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); hp.n_clusters];
    for (i, &c) in assignments.iter().enumerate() {
        members[c].push(i);
    }

    let solve_cluster = |rows: &Vec<usize>| -> Result<WeightVector> {
        if rows.is_empty() {
            // Unreachable after k-means repair; uniform weights keep the
            // table well-formed if it ever occurs.
            let m = ds.n_models();
            return Ok(WeightVector {
                weights: vec![1.0 / m as f64; m],
                objective_value: 0.0,
                solver_iterations: 0,
                kkt_residual: 0.0,
            });
        }
        let x_k: Vec<Vec<f64>> = rows.iter().map(|&i| ds.row(i).to_vec()).collect();
        let y_k: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
        let problem = QpProblem::new(x_k, y_k, &redundancy, hp.lambda)?;
        solve_weights(&problem, hp.solver_tol, hp.solver_max_iter)
    };
    #[cfg(feature = "parallel")]
    let weights: Vec<WeightVector> = members
        .par_iter()
        .map(solve_cluster)
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("weights"))?;
    #[cfg(not(feature = "parallel"))]
    let weights: Vec<WeightVector> = members
        .iter()
        .map(solve_cluster)
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("weights"))?;

    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    for (i, &c) in assignments.iter().enumerate() {
        let pred: f64 = weights[c].weights.iter().zip(ds.row(i)).map(|(w, x)| w * x).sum();
        let err = ds.y()[i] - pred;
        sq_sum += err * err;
        abs_sum += err.abs();
    }
    let training = TrainingSummary {
        n_train: n,
        cluster_counts: members.iter().map(Vec::len).collect(),
        train_mse: sq_sum / n as f64,
        train_mae: abs_sum / n as f64,
    };

    Ok(TrainedEnsemble {
        schema_version: MODEL_SCHEMA_VERSION,
        horizon: ds.horizon(),
        model_names: ds.model_names().to_vec(),
        hyperparams: hp.clone(),
        regime,
        weights,
        redundancy,
        training,
    })
}

/// Contiguous fold boundaries: `n` samples into `n_folds` blocks, the first
/// `n % n_folds` one sample larger.
fn fold_ranges(n: usize, n_folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / n_folds;
    let extra = n % n_folds;
    let mut out = Vec::with_capacity(n_folds);
    let mut start = 0;
    for f in 0..n_folds {
        let len = base + usize::from(f < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Cross-validated grid search over hyperparameters.
///
/// Folds are temporally contiguous blocks (no shuffling); each fold validates
/// on its block and trains on the concatenated remainder. Returns the grid
/// point with the lowest mean validation MSE — ties broken lexicographically
/// by (clusters, window, lambda) — together with the full score table in grid
/// order.
pub fn tune_grid(
    ds: &ForecastDataset,
    grid: &HyperGrid,
    n_folds: usize,
    seed: u64,
) -> Result<(Hyperparams, Vec<ScoreRow>)> {
    if n_folds < 2 {
        return Err(Error::Tuning(format!("need at least 2 folds, got {n_folds}")));
    }
    if grid.is_empty() {
        return Err(Error::Tuning("hyperparameter grid is empty".into()));
    }
    let n = ds.n();
    if n < n_folds {
        return Err(Error::Tuning(format!(
            "{n} samples cannot form {n_folds} folds"
        )));
    }
    let max_k = *grid.clusters.iter().max().unwrap();
    let max_m = *grid.windows.iter().max().unwrap();
    let ranges = fold_ranges(n, n_folds);
    for (f, range) in ranges.iter().enumerate() {
        let n_train = n - range.len();
        let needed = max_k.max(max_m).max(2);
        if range.is_empty() || n_train < needed {
            return Err(Error::Tuning(format!(
                "fold {f} leaves {n_train} training samples; the grid needs at least {needed}"
            )));
        }
    }

    let evaluate = |hp: &Hyperparams| -> Result<f64> {
        let mut total = 0.0;
        for range in &ranges {
            let train_idx: Vec<usize> = (0..n).filter(|i| !range.contains(i)).collect();
            let train = ds.subset(&train_idx)?;
            let fitted = fit(&train, hp)?;
            let mut sq = 0.0;
            for i in range.clone() {
                let pred = fitted.predict(ds.row(i))?;
                let err = ds.y()[i] - pred;
                sq += err * err;
            }
            total += sq / range.len() as f64;
        }
        Ok(total / ranges.len() as f64)
    };

    let points = grid.points(seed);
    #[cfg(feature = "parallel")]
    let scores: Vec<f64> = points.par_iter().map(evaluate).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<f64> = points.iter().map(evaluate).collect::<Result<_>>()?;

    let table: Vec<ScoreRow> = points
        .iter()
        .zip(&scores)
        .map(|(hp, &cv_mse)| ScoreRow {
            n_clusters: hp.n_clusters,
            window: hp.window,
            lambda: hp.lambda,
            cv_mse,
        })
        .collect();

    let mut best = 0usize;
    for (idx, row) in table.iter().enumerate().skip(1) {
        let cur = &table[best];
        let better = row.cv_mse < cur.cv_mse
            || (row.cv_mse == cur.cv_mse
                && (row.n_clusters, row.window, row.lambda)
                    < (cur.n_clusters, cur.window, cur.lambda));
        if better {
            best = idx;
        }
    }
    Ok((points[best].clone(), table))
}
