//! AB-join matrix profiles between model forecast series and the redundancy
//! matrix built from them.
//!
//! Distances are z-normalized Euclidean: each length-m window is shifted to
//! mean zero and scaled to unit variance before comparison, so two models that
//! produce the same temporal shapes at different offsets or scales still count
//! as redundant. The fast path keeps a sliding dot product across query
//! positions and derives distances from rolling window statistics; a direct
//! brute-force evaluation of the same quantity serves as the ground truth in
//! tests.
//!
//! Constant (zero-variance) windows have no z-normalized form; by convention
//! their normalized shape is the all-zeros vector, which makes the distance
//! between two constant windows 0 and between a constant and a non-constant
//! window sqrt(m). Both computation routes apply the same convention.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Windows whose relative standard deviation falls below this are treated as
/// constant by every code path in this module.
const CONST_STD_TOL: f64 = 1e-13;

/// Distances below this are recomputed directly from the z-normalized
/// windows: the correlation-form distance loses accuracy near zero because
/// sqrt amplifies cancellation error, and profile minima live exactly there.
const REFINE_THRESHOLD: f64 = 0.25;

/// Smallest supported subsequence window.
pub const MIN_WINDOW: usize = 3;

/// Result of joining one series against another: for every window of the
/// first series, the distance to (and start of) its nearest window in the
/// second series.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProfileResult {
    /// Minimum z-normalized distances, one per window of the first series.
    pub distances: Vec<f64>,
    /// Start positions of the matched windows in the second series.
    pub indices: Vec<usize>,
    /// Subsequence length used.
    pub window: usize,
}

/// Symmetric model-by-model similarity matrix used to penalize redundant
/// models during weight optimization. Entries near 1 mean two models produce
/// nearly the same temporal patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyMatrix {
    s: Vec<Vec<f64>>,
    window: usize,
    psd_shift: f64,
}

/// How per-pair profile distances collapse to a scalar similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ProfileAggregation {
    /// Mean profile distance (default; stable against isolated matches).
    #[default]
    Mean,
    /// Minimum profile distance (similar if the models ever track each other).
    Min,
}

impl RedundancyMatrix {
    /// Validate and wrap an externally supplied penalty matrix.
    ///
    /// The matrix must be symmetric within 1e-10 and positive semidefinite
    /// within 1e-8; use [`psd_project`] first if it is not.
    pub fn try_new(s: Vec<Vec<f64>>, window: usize) -> Result<Self> {
        let m = s.len();
        if m == 0 {
            return Err(Error::Contract("penalty matrix must be non-empty".into()));
        }
        for row in &s {
            if row.len() != m {
                return Err(Error::Contract("penalty matrix must be square".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("penalty matrix has non-finite entries".into()));
            }
        }
        check_symmetry(&s)?;
        let min_eig = min_eigenvalue(&s);
        if min_eig < -1e-8 {
            return Err(Error::Contract(format!(
                "penalty matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(RedundancyMatrix {
            s,
            window,
            psd_shift: 0.0,
        })
    }

    /// M-by-M identity penalty (no cross-model redundancy).
    pub fn identity(n_models: usize) -> Self {
        let s = (0..n_models)
            .map(|i| (0..n_models).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        RedundancyMatrix {
            s,
            window: 0,
            psd_shift: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Magnitude of the largest eigenvalue clipped during PSD projection.
    pub fn psd_shift(&self) -> f64 {
        self.psd_shift
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.s
    }

    /// Quadratic form w' S w.
    pub fn quad_form(&self, w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let mut row_acc = 0.0;
            for (j, wj) in w.iter().enumerate() {
                row_acc += self.s[i][j] * wj;
            }
            acc += wi * row_acc;
        }
        acc
    }
}

#[allow(clippy::needless_range_loop)]
fn check_symmetry(s: &[Vec<f64>]) -> Result<()> {
    let m = s.len();
    for i in 0..m {
        for j in (i + 1)..m {
            if (s[i][j] - s[j][i]).abs() > 1e-10 {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    s[i][j], s[j][i]
                )));
            }
        }
    }
    Ok(())
}

fn to_dmatrix(s: &[Vec<f64>]) -> DMatrix<f64> {
    let m = s.len();
    DMatrix::from_fn(m, m, |i, j| s[i][j])
}

fn min_eigenvalue(s: &[Vec<f64>]) -> f64 {
    let sym = nalgebra::SymmetricEigen::new(to_dmatrix(s));
    sym.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Project a symmetric matrix onto the positive semidefinite cone by clipping
/// negative eigenvalues to zero (the nearest PSD matrix in Frobenius norm).
///
/// Returns the projected matrix and the magnitude of the largest clipped
/// eigenvalue. Matrices that are already PSD are returned unchanged.
pub fn psd_project(s: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let m = s.len();
    if m == 0 {
        return Err(Error::Contract("psd_project requires a non-empty matrix".into()));
    }
    for row in s {
        if row.len() != m {
            return Err(Error::Contract("psd_project requires a square matrix".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("psd_project requires finite entries".into()));
        }
    }
    check_symmetry(s)?;

    let mat = to_dmatrix(s);
    let scale = mat.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let eig = nalgebra::SymmetricEigen::new(mat);
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    // Reconstructing from an eigen factorization perturbs entries at machine
    // precision, which matters when exact row duplicates must stay duplicates.
    // Skip it when the input already satisfies the PSD invariant.
    if min_eig >= -1e-12 * (1.0 + scale) {
        return Ok((s.to_vec(), 0.0));
    }

    let shift = -min_eig;
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
    let rebuilt = &eig.eigenvectors * clipped * eig.eigenvectors.transpose();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            out[i][j] = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
        }
    }
    Ok((out, shift))
}

struct RollingStats {
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// Per-window mean and population standard deviation via prefix sums.
fn rolling_stats(series: &[f64], m: usize) -> RollingStats {
    let n = series.len();
    let count = n - m + 1;
    let mut sum = vec![0.0; n + 1];
    let mut sumsq = vec![0.0; n + 1];
    for (i, &v) in series.iter().enumerate() {
        sum[i + 1] = sum[i] + v;
        sumsq[i + 1] = sumsq[i] + v * v;
    }
    let mut means = Vec::with_capacity(count);
    let mut stds = Vec::with_capacity(count);
    let mf = m as f64;
    for j in 0..count {
        let mean = (sum[j + m] - sum[j]) / mf;
        let var = ((sumsq[j + m] - sumsq[j]) / mf - mean * mean).max(0.0);
        means.push(mean);
        stds.push(var.sqrt());
    }
    RollingStats { means, stds }
}

fn is_constant(std: f64, mean: f64) -> bool {
    std <= CONST_STD_TOL * mean.abs().max(1.0)
}

/// z-normalized distance between two windows given their sliding dot product
/// and statistics, applying the constant-window convention.
fn dist_from_qt(qt: f64, mean_a: f64, std_a: f64, mean_b: f64, std_b: f64, m: usize) -> f64 {
    let mf = m as f64;
    let const_a = is_constant(std_a, mean_a);
    let const_b = is_constant(std_b, mean_b);
    if const_a && const_b {
        return 0.0;
    }
    if const_a || const_b {
        return mf.sqrt();
    }
    let corr = (qt - mf * mean_a * mean_b) / (mf * std_a * std_b);
    let d = (2.0 * mf * (1.0 - corr)).max(0.0).sqrt();
    d.min(2.0 * mf.sqrt())
}

fn validate_window(len: usize, m: usize, what: &str) -> Result<()> {
    if m < MIN_WINDOW {
        return Err(Error::Window(format!("window {m} is below the minimum {MIN_WINDOW}")));
    }
    if len < m {
        return Err(Error::Window(format!(
            "{what} has {len} samples, shorter than window {m}"
        )));
    }
    Ok(())
}

/// Subtract the series mean. z-normalized distances are shift-invariant, so
/// this changes nothing mathematically while keeping the sliding dot products
/// small and well conditioned (rainfall levels dwarf their local variation).
fn center(series: &[f64]) -> Vec<f64> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.iter().map(|v| v - mean).collect()
}

/// Direct two-pass z-normalized distance between two windows.
fn direct_distance(wa: &[f64], wb: &[f64]) -> f64 {
    let za = znorm_window(wa);
    let zb = znorm_window(wb);
    let d2: f64 = za.iter().zip(&zb).map(|(x, y)| (x - y) * (x - y)).sum();
    d2.sqrt().min(2.0 * (wa.len() as f64).sqrt())
}

/// Distance profile of one fixed query window against every window of a series.
pub fn distance_profile(query: &[f64], series: &[f64], m: usize) -> Result<Vec<f64>> {
    validate_window(series.len(), m, "series")?;
    if query.len() != m {
        return Err(Error::Contract(format!(
            "query length {} does not match window {m}",
            query.len()
        )));
    }
    let query = center(query);
    let series = center(series);
    let q_mean = query.iter().sum::<f64>() / m as f64;
    let q_var = query.iter().map(|v| (v - q_mean).powi(2)).sum::<f64>() / m as f64;
    let q_std = q_var.sqrt();
    let stats = rolling_stats(&series, m);
    let count = series.len() - m + 1;
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let qt: f64 = query.iter().zip(&series[j..j + m]).map(|(a, b)| a * b).sum();
        let mut d = dist_from_qt(qt, q_mean, q_std, stats.means[j], stats.stds[j], m);
        if d < REFINE_THRESHOLD {
            d = direct_distance(&query, &series[j..j + m]);
        }
        out.push(d);
    }
    Ok(out)
}

/// Both directions of an AB-join in one pass.
///
/// The sliding dot product for row i+1 is derived from row i in O(1) per
/// column, so the full join costs O(n_a * n_b) plus the rolling statistics.
fn join_pair(a: &[f64], b: &[f64], m: usize) -> (MatrixProfileResult, MatrixProfileResult) {
    let a = center(a);
    let b = center(b);
    let count_a = a.len() - m + 1;
    let count_b = b.len() - m + 1;
    let stats_a = rolling_stats(&a, m);
    let stats_b = rolling_stats(&b, m);

    let mut dist_a = vec![f64::INFINITY; count_a];
    let mut idx_a = vec![0usize; count_a];
    let mut dist_b = vec![f64::INFINITY; count_b];
    let mut idx_b = vec![0usize; count_b];

    let mut qt = vec![0.0; count_b];
    for j in 0..count_b {
        qt[j] = a[..m].iter().zip(&b[j..j + m]).map(|(x, y)| x * y).sum();
    }
    for i in 0..count_a {
        if i > 0 {
            // Shift the previous row's dot products along the diagonal.
            for j in (1..count_b).rev() {
                qt[j] = qt[j - 1] - a[i - 1] * b[j - 1] + a[i + m - 1] * b[j + m - 1];
            }
            qt[0] = a[i..i + m].iter().zip(&b[..m]).map(|(x, y)| x * y).sum();
        }
        let (mean_a, std_a) = (stats_a.means[i], stats_a.stds[i]);
        for j in 0..count_b {
            let mut d = dist_from_qt(qt[j], mean_a, std_a, stats_b.means[j], stats_b.stds[j], m);
            if d < REFINE_THRESHOLD {
                d = direct_distance(&a[i..i + m], &b[j..j + m]);
            }
            if d < dist_a[i] {
                dist_a[i] = d;
                idx_a[i] = j;
            }
            if d < dist_b[j] {
                dist_b[j] = d;
                idx_b[j] = i;
            }
        }
    }

    (
        MatrixProfileResult {
            distances: dist_a,
            indices: idx_a,
            window: m,
        },
        MatrixProfileResult {
            distances: dist_b,
            indices: idx_b,
            window: m,
        },
    )
}

/// AB-join profile: for each window of `series_a`, the minimum z-normalized
/// distance to any window of `series_b`. No exclusion zone is applied.
pub fn ab_join_profile(series_a: &[f64], series_b: &[f64], m: usize) -> Result<MatrixProfileResult> {
    validate_window(series_a.len(), m, "series_a")?;
    validate_window(series_b.len(), m, "series_b")?;
    Ok(join_pair(series_a, series_b, m).0)
}

/// Brute-force evaluation of [`ab_join_profile`]: z-normalize every window
/// pair explicitly and take direct Euclidean distances. O(n_a * n_b * m);
/// intended as the test oracle for modest series lengths.
pub fn mp_brute_force(series_a: &[f64], series_b: &[f64], m: usize) -> Result<MatrixProfileResult> {
    validate_window(series_a.len(), m, "series_a")?;
    validate_window(series_b.len(), m, "series_b")?;
    let series_a = center(series_a);
    let series_b = center(series_b);
    let windows_b = znorm_windows(&series_b, m);
    let count_a = series_a.len() - m + 1;
    let mut distances = Vec::with_capacity(count_a);
    let mut indices = Vec::with_capacity(count_a);
    let cap = 2.0 * (m as f64).sqrt();
    for i in 0..count_a {
        let wa = znorm_window(&series_a[i..i + m]);
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        for (j, wb) in windows_b.iter().enumerate() {
            let d2: f64 = wa.iter().zip(wb).map(|(x, y)| (x - y) * (x - y)).sum();
            let d = d2.sqrt().min(cap);
            if d < best {
                best = d;
                best_j = j;
            }
        }
        distances.push(best);
        indices.push(best_j);
    }
    Ok(MatrixProfileResult {
        distances,
        indices,
        window: m,
    })
}

fn znorm_window(window: &[f64]) -> Vec<f64> {
    let m = window.len() as f64;
    let mean = window.iter().sum::<f64>() / m;
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let std = var.sqrt();
    if is_constant(std, mean) {
        vec![0.0; window.len()]
    } else {
        window.iter().map(|v| (v - mean) / std).collect()
    }
}

fn znorm_windows(series: &[f64], m: usize) -> Vec<Vec<f64>> {
    (0..series.len() - m + 1)
        .map(|j| znorm_window(&series[j..j + m]))
        .collect()
}

/// Build the redundancy matrix from one series per model using the default
/// mean aggregation.
pub fn redundancy_matrix(model_series: &[Vec<f64>], m: usize) -> Result<RedundancyMatrix> {
    redundancy_matrix_with(model_series, m, ProfileAggregation::Mean)
}

/// Build the redundancy matrix with an explicit profile aggregation.
///
/// For each ordered pair of models the AB-join profile is collapsed to a
/// scalar, mapped to a similarity `1 - agg / (2 sqrt(m))` clipped to [0, 1],
/// averaged with the opposite direction, and the result (diagonal forced to 1)
/// is PSD-projected so it can serve as a convex penalty.
pub fn redundancy_matrix_with(
    model_series: &[Vec<f64>],
    m: usize,
    aggregation: ProfileAggregation,
) -> Result<RedundancyMatrix> {
    let n_models = model_series.len();
    if n_models == 0 {
        return Err(Error::Contract("redundancy matrix needs at least one model".into()));
    }
    for (j, series) in model_series.iter().enumerate() {
        validate_window(series.len(), m, &format!("model series {j}"))?;
    }

    let pairs: Vec<(usize, usize)> = (0..n_models)
        .flat_map(|i| ((i + 1)..n_models).map(move |j| (i, j)))
        .collect();
    let similarity = |&(i, j): &(usize, usize)| -> (usize, usize, f64) {
        let (prof_ab, prof_ba) = join_pair(&model_series[i], &model_series[j], m);
        let s_ab = profile_similarity(&prof_ab.distances, m, aggregation);
        let s_ba = profile_similarity(&prof_ba.distances, m, aggregation);
        (i, j, 0.5 * (s_ab + s_ba))
    };
    #[cfg(feature = "parallel")]
    let computed: Vec<(usize, usize, f64)> = pairs.par_iter().map(similarity).collect();
    #[cfg(not(feature = "parallel"))]
    let computed: Vec<(usize, usize, f64)> = pairs.iter().map(similarity).collect();

    let mut s = vec![vec![0.0; n_models]; n_models];
    for (k, row) in s.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    for (i, j, value) in computed {
        s[i][j] = value;
        s[j][i] = value;
    }

    let (projected, psd_shift) = psd_project(&s)?;
    Ok(RedundancyMatrix {
        s: projected,
        window: m,
        psd_shift,
    })
}

fn profile_similarity(distances: &[f64], m: usize, aggregation: ProfileAggregation) -> f64 {
    let agg = match aggregation {
        ProfileAggregation::Mean => distances.iter().sum::<f64>() / distances.len() as f64,
        ProfileAggregation::Min => distances.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
    };
    (1.0 - agg / (2.0 * (m as f64).sqrt())).clamp(0.0, 1.0)
}
