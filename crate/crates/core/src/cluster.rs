//! Regime identification: Lloyd's k-means over standardized forecast rows,
//! with k-means++ seeding from an explicit seed so fits are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ScalerParams;
use crate::error::{Error, Result};

/// Default Lloyd iteration cap.
pub const DEFAULT_MAX_ITER: usize = 300;
/// Default convergence tolerance on the maximum centroid displacement.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Fitted regime model: K centroids in standardized feature space plus the
/// scaler that maps raw rows into that space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    centroids: Vec<Vec<f64>>,
    scaler: ScalerParams,
    seed: u64,
    iterations_run: usize,
    converged: bool,
}

impl RegimeModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn n_features(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Attach the scaler used to standardize the training rows. `fit_kmeans`
    /// runs on already-standardized data, so it records an identity scaler
    /// until the caller provides the real one.
    pub fn with_scaler(mut self, scaler: ScalerParams) -> Self {
        self.scaler = scaler;
        self
    }

    /// Nearest-centroid assignment of a standardized row. Ties break toward
    /// the lowest cluster index.
    pub fn assign(&self, x_std: &[f64]) -> Result<usize> {
        if x_std.len() != self.n_features() {
            return Err(Error::Contract(format!(
                "assign expects {} features, got {}",
                self.n_features(),
                x_std.len()
            )));
        }
        if x_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("assign requires finite input".into()));
        }
        Ok(nearest(&self.centroids, x_std).0)
    }

    /// Sum of squared distances from each row to its assigned centroid.
    pub fn inertia(&self, x_std: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for row in x_std {
            if row.len() != self.n_features() {
                return Err(Error::Contract(format!(
                    "inertia expects {} features, got {}",
                    self.n_features(),
                    row.len()
                )));
            }
            total += nearest(&self.centroids, row).1;
        }
        Ok(total)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, row);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to the squared distance to the nearest chosen one.
fn seed_centroids(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x[rng.gen_range(0..n)].clone());
    let mut min_d: Vec<f64> = x.iter().map(|row| sq_dist(row, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = min_d.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centroids.
            rng.gen_range(0..n)
        };
        centroids.push(x[next].clone());
        for (i, row) in x.iter().enumerate() {
            let d = sq_dist(row, centroids.last().unwrap());
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    centroids
}

/// Fit k-means with Lloyd's algorithm.
///
/// Deterministic given `(x_std, k, seed, max_iter, tol)`; single-threaded by
/// contract so repeated fits are bit-identical. Empty clusters are repaired by
/// promoting the point farthest from its assigned centroid to a singleton.
pub fn fit_kmeans(
    x_std: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<RegimeModel> {
    let n = x_std.len();
    if k == 0 {
        return Err(Error::Contract("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::Infeasible(format!(
            "cannot fit {k} clusters with only {n} samples (need n >= K)"
        )));
    }
    if max_iter == 0 {
        return Err(Error::Contract("max_iter must be >= 1".into()));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Contract("tol must be > 0".into()));
    }
    let m = x_std[0].len();
    if m == 0 || x_std.iter().any(|r| r.len() != m) {
        return Err(Error::Contract("x_std rows must be non-empty and rectangular".into()));
    }
    if x_std.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("x_std must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(x_std, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut iterations_run = 0;
    let mut converged = false;

    for _ in 0..max_iter {
        iterations_run += 1;
        for (i, row) in x_std.iter().enumerate() {
            assignments[i] = nearest(&centroids, row).0;
        }

        let mut sums = vec![vec![0.0; m]; k];
        let mut counts = vec![0usize; k];
        for (row, &c) in x_std.iter().zip(&assignments) {
            counts[c] += 1;
            for (acc, v) in sums[c].iter_mut().zip(row) {
                *acc += v;
            }
        }

        let mut new_centroids = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..m {
                    new_centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }

        // Empty-cluster repair: promote the farthest point to a singleton.
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                let mut far_i = 0;
                let mut far_d = -1.0;
                for (i, row) in x_std.iter().enumerate() {
                    if taken.contains(&i) {
                        continue;
                    }
                    let d = sq_dist(row, &new_centroids[assignments[i]]);
                    if d > far_d {
                        far_d = d;
                        far_i = i;
                    }
                }
                new_centroids[c] = x_std[far_i].clone();
                taken.push(far_i);
            }
        }

        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift < tol {
            converged = true;
            break;
        }
    }

    Ok(RegimeModel {
        centroids,
        scaler: ScalerParams::identity(m),
        seed,
        iterations_run,
        converged,
    })
}
