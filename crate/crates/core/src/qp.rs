//! Per-cluster weight optimization: minimize `||y - Xw||^2 + lambda w'Sw`
//! over the probability simplex (nonnegative weights summing to one).
//!
//! The contract is the optimum of this convex program, not a particular
//! algorithm. The solver here is a primal active-set method: it repeatedly
//! solves the equality-constrained problem on the currently free coordinates
//! exactly, steps to the nearest bound when the solution leaves the feasible
//! set, and releases bound coordinates whose multiplier is negative. The face
//! subproblem is solved spectrally in an orthonormal basis of the sum-zero
//! tangent space, with near-null curvature directions dropped, so the iterate
//! is the minimum-norm optimum: rank-deficient problems (duplicate models at
//! lambda 0) split weight equally and deterministically.
//!
//! A simplex-grid enumeration oracle and a KKT residual check are provided for
//! verification against the solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RedundancyMatrix;

/// Default relative objective tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap for the active-set loop.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Curvature below this fraction of the largest face eigenvalue is treated as
/// flat; the solver keeps no component along such directions (minimum-norm
/// tie rule).
const FLAT_EIGENVALUE_TOL: f64 = 1e-10;

/// A point on the simplex together with solver provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// `||y - Xw||^2 + lambda w'Sw` at the returned point (no ridge).
    pub objective_value: f64,
    pub solver_iterations: usize,
    pub kkt_residual: f64,
}

impl WeightVector {
    /// Check the simplex invariants: every coordinate in [0, 1] and the
    /// coordinates summing to one within 1e-9.
    pub fn is_feasible(&self) -> bool {
        let sum: f64 = self.weights.iter().sum();
        self.weights.iter().all(|&w| (0.0..=1.0).contains(&w)) && (sum - 1.0).abs() <= 1e-9
    }
}

/// One cluster's weight-fitting problem.
#[derive(Debug, Clone)]
pub struct QpProblem {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    s: Vec<Vec<f64>>,
    lambda: f64,
}

impl QpProblem {
    /// Pose a problem against a validated redundancy matrix.
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        s: &RedundancyMatrix,
        lambda: f64,
    ) -> Result<Self> {
        Self::with_penalty(x, y, s.rows().to_vec(), lambda)
    }

    /// Pose a problem against a raw penalty matrix. The matrix must still be
    /// symmetric PSD; `solve_weights` verifies this and rejects violations.
    pub fn with_penalty(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        s: Vec<Vec<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Contract("QP needs at least one sample".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Contract(format!(
                "X has {} rows but y has {} entries",
                x.len(),
                y.len()
            )));
        }
        let m = x[0].len();
        if m == 0 {
            return Err(Error::Contract("QP needs at least one model".into()));
        }
        if x.iter().any(|r| r.len() != m) {
            return Err(Error::Contract("X must be rectangular".into()));
        }
        if s.len() != m || s.iter().any(|r| r.len() != m) {
            return Err(Error::Contract(format!(
                "penalty matrix must be {m}x{m} to match X"
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Contract(format!("lambda must be >= 0, got {lambda}")));
        }
        let finite = x.iter().flatten().all(|v| v.is_finite())
            && y.iter().all(|v| v.is_finite())
            && s.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Contract("QP inputs must be finite".into()));
        }
        Ok(QpProblem { x, y, s, lambda })
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_models(&self) -> usize {
        self.x[0].len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `||y - Xw||^2 + lambda w'Sw`, computed from residuals.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let mut fit = 0.0;
        for (row, &yi) in self.x.iter().zip(&self.y) {
            let pred: f64 = row.iter().zip(w).map(|(x, wi)| x * wi).sum();
            fit += (yi - pred) * (yi - pred);
        }
        fit + self.lambda * quad_form(&self.s, w)
    }

    /// Data-fit term `||y - Xw||^2` alone.
    pub fn data_fit(&self, w: &[f64]) -> f64 {
        let mut fit = 0.0;
        for (row, &yi) in self.x.iter().zip(&self.y) {
            let pred: f64 = row.iter().zip(w).map(|(x, wi)| x * wi).sum();
            fit += (yi - pred) * (yi - pred);
        }
        fit
    }

    /// Gram matrix X'X.
    fn gram(&self) -> DMatrix<f64> {
        let m = self.n_models();
        let mut g = DMatrix::zeros(m, m);
        for row in &self.x {
            for i in 0..m {
                for j in i..m {
                    g[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    /// X'y.
    fn xty(&self) -> DVector<f64> {
        let m = self.n_models();
        let mut b = DVector::zeros(m);
        for (row, &yi) in self.x.iter().zip(&self.y) {
            for i in 0..m {
                b[i] += row[i] * yi;
            }
        }
        b
    }

    fn penalty_matrix(&self) -> DMatrix<f64> {
        let m = self.n_models();
        DMatrix::from_fn(m, m, |i, j| self.s[i][j])
    }
}

fn quad_form(s: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let mut row = 0.0;
        for (j, wj) in w.iter().enumerate() {
            row += s[i][j] * wj;
        }
        acc += wi * row;
    }
    acc
}

/// Gradient of the objective: `2 X'(Xw - y) + 2 lambda S w`.
pub fn objective_gradient(p: &QpProblem, w: &[f64]) -> Vec<f64> {
    gradient(p, w)
}

fn gradient(p: &QpProblem, w: &[f64]) -> Vec<f64> {
    let m = p.n_models();
    let mut g = vec![0.0; m];
    for (row, &yi) in p.x.iter().zip(&p.y) {
        let resid: f64 = row.iter().zip(w).map(|(x, wi)| x * wi).sum::<f64>() - yi;
        for (gi, xi) in g.iter_mut().zip(row) {
            *gi += 2.0 * xi * resid;
        }
    }
    for (gi, s_row) in g.iter_mut().zip(&p.s) {
        let sw: f64 = s_row.iter().zip(w).map(|(sij, wj)| sij * wj).sum();
        *gi += 2.0 * p.lambda * sw;
    }
    g
}

/// First-order optimality violation of `w` on the simplex.
///
/// At an optimum every supported coordinate (w_i > 1e-8) shares the minimal
/// gradient value; the residual is how far the supported coordinates' gradient
/// entries rise above that minimum.
pub fn kkt_residual(p: &QpProblem, w: &[f64]) -> f64 {
    let g = gradient(p, w);
    let g_min = g.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mut worst = 0.0f64;
    for (i, &wi) in w.iter().enumerate() {
        if wi > 1e-8 {
            worst = worst.max(g[i] - g_min);
        }
    }
    worst
}

/// Orthonormal basis of the sum-zero subspace of R^f (Helmert columns).
fn sum_zero_basis(f: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(f, f - 1);
    for k in 0..f - 1 {
        let scale = 1.0 / ((k + 1) as f64 * (k + 2) as f64).sqrt();
        for i in 0..=k {
            z[(i, k)] = scale;
        }
        z[(k + 1, k)] = -((k + 1) as f64) * scale;
    }
    z
}

/// Solve the equality-constrained subproblem on the free coordinates:
/// minimize w'Hw - 2b'w subject to sum(w_free) = 1.
///
/// Solved in the orthonormal tangent basis around the uniform point, via the
/// spectral pseudo-inverse of the reduced Hessian. Flat directions get no
/// component, which makes the solution the minimum-norm face optimum.
/// Returns the free-coordinate values and the equality multiplier.
fn solve_on_face(h: &DMatrix<f64>, b: &DVector<f64>, free: &[usize]) -> (Vec<f64>, f64) {
    let f = free.len();
    let h_ff = DMatrix::from_fn(f, f, |r, c| h[(free[r], free[c])]);
    let b_f = DVector::from_fn(f, |r, _| b[free[r]]);
    let u = DVector::from_element(f, 1.0 / f as f64);

    let w_f = if f == 1 {
        u.clone()
    } else {
        let z = sum_zero_basis(f);
        let reduced = z.transpose() * &h_ff * &z;
        let rhs = z.transpose() * (&b_f - &h_ff * &u);
        let eig = nalgebra::SymmetricEigen::new(reduced);
        let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let cut = FLAT_EIGENVALUE_TOL * max_eig.max(f64::MIN_POSITIVE);
        let mut t = DVector::zeros(f - 1);
        for k in 0..f - 1 {
            let lambda = eig.eigenvalues[k];
            if lambda > cut {
                let v = eig.eigenvectors.column(k);
                t += v * (v.dot(&rhs) / lambda);
            }
        }
        u + z * t
    };

    // Stationarity: 2 H w - 2 b + nu 1 = 0 on the tangent space.
    let g = &h_ff * &w_f * 2.0 - &b_f * 2.0;
    let nu = -g.iter().sum::<f64>() / f as f64;
    (w_f.as_slice().to_vec(), nu)
}

/// Solve the simplex-constrained weight problem to optimality.
///
/// Deterministic given its inputs. Errors if the penalty matrix is asymmetric
/// or not positive semidefinite (pass it through [`psd_project`] first) or if
/// inputs are non-finite.
///
/// [`psd_project`]: crate::profile::psd_project
pub fn solve_weights(p: &QpProblem, tol: f64, max_iter: usize) -> Result<WeightVector> {
    let m = p.n_models();
    if !tol.is_finite() || tol <= 0.0 || max_iter == 0 {
        return Err(Error::Contract("tol must be > 0 and max_iter >= 1".into()));
    }
    // Reject penalty matrices that skipped PSD projection.
    for i in 0..m {
        for j in (i + 1)..m {
            if (p.s[i][j] - p.s[j][i]).abs() > 1e-10 {
                return Err(Error::Contract(format!(
                    "penalty matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if m > 1 {
        let eig = nalgebra::SymmetricEigen::new(p.penalty_matrix());
        let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let scale = p.s.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
        if min_eig < -1e-8 * (1.0 + scale) {
            return Err(Error::Contract(format!(
                "penalty matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
    }

    let h = p.gram() + p.penalty_matrix() * p.lambda;
    let b = p.xty();
    let b_scale = b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mult_tol = 1e-11 * (1.0 + b_scale);

    let mut w = vec![1.0 / m as f64; m];
    let mut bound = vec![false; m];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let free: Vec<usize> = (0..m).filter(|&i| !bound[i]).collect();
        let (target, nu) = solve_on_face(&h, &b, &free);

        if target.iter().all(|&v| v >= -1e-10) {
            for &i in &free {
                w[i] = 0.0;
            }
            for (v, &i) in target.iter().zip(&free) {
                w[i] = v.max(0.0);
            }
            // Bound coordinates are optimal when their multiplier
            // g_i + nu is nonnegative.
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..m {
                if bound[i] {
                    let mut hw = 0.0;
                    for j in 0..m {
                        hw += h[(i, j)] * w[j];
                    }
                    let mu = 2.0 * hw - 2.0 * b[i] + nu;
                    if mu < -mult_tol && worst.is_none_or(|(_, best)| mu < best) {
                        worst = Some((i, mu));
                    }
                }
            }
            match worst {
                Some((i, _)) => bound[i] = false,
                None => break,
            }
        } else {
            // Step toward the face solution until a coordinate hits zero.
            let mut alpha = 1.0f64;
            let mut blocker = None;
            for (v, &i) in target.iter().zip(&free) {
                let d = v - w[i];
                if d < -1e-15 {
                    let step = w[i] / (-d);
                    if step < alpha {
                        alpha = step;
                        blocker = Some(i);
                    }
                }
            }
            for (v, &i) in target.iter().zip(&free) {
                w[i] += alpha * (v - w[i]);
            }
            match blocker {
                Some(i) => {
                    w[i] = 0.0;
                    bound[i] = true;
                }
                None => {
                    // No blocking coordinate despite an infeasible target:
                    // numerical noise at a bound; clamp and accept.
                    for wi in w.iter_mut() {
                        *wi = wi.max(0.0);
                    }
                    break;
                }
            }
        }
    }

    let weights: Vec<f64> = w.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "solver produced weights summing to {sum}, expected 1"
        )));
    }
    let kkt = kkt_residual(p, &weights);
    Ok(WeightVector {
        objective_value: p.objective(&weights),
        solver_iterations: iterations,
        kkt_residual: kkt,
        weights,
    })
}

/// Exhaustive simplex-grid search, the ground truth for small problems.
///
/// Evaluates the objective at every grid point with the given spacing and
/// returns the best; supports at most three models.
pub fn qp_oracle_grid(p: &QpProblem, step: f64) -> Result<WeightVector> {
    let m = p.n_models();
    if m > 3 {
        return Err(Error::Unsupported(format!(
            "grid oracle supports at most 3 models, got {m}"
        )));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Contract(format!("step must lie in (0, 1], got {step}")));
    }
    let r = (1.0 / step).round().max(1.0) as usize;
    let rf = r as f64;

    // Quadratic-form coefficients make each grid evaluation O(M^2).
    let gram = p.gram();
    let b = p.xty();
    let yty: f64 = p.y.iter().map(|v| v * v).sum();
    let a = &gram + p.penalty_matrix() * p.lambda;
    let eval = |w: &[f64]| -> f64 {
        let mut acc = yty;
        for i in 0..m {
            acc -= 2.0 * b[i] * w[i];
            for j in 0..m {
                acc += w[i] * a[(i, j)] * w[j];
            }
        }
        acc
    };

    let mut best_w = vec![0.0; m];
    let mut best_val = f64::INFINITY;
    let mut evaluated = 0usize;
    match m {
        1 => {
            best_w = vec![1.0];
            evaluated = 1;
        }
        2 => {
            for i in 0..=r {
                let w = vec![i as f64 / rf, (r - i) as f64 / rf];
                let v = eval(&w);
                evaluated += 1;
                if v < best_val {
                    best_val = v;
                    best_w = w;
                }
            }
        }
        _ => {
            for i in 0..=r {
                for j in 0..=(r - i) {
                    let w = vec![i as f64 / rf, j as f64 / rf, (r - i - j) as f64 / rf];
                    let v = eval(&w);
                    evaluated += 1;
                    if v < best_val {
                        best_val = v;
                        best_w = w;
                    }
                }
            }
        }
    }

    let kkt = kkt_residual(p, &best_w);
    Ok(WeightVector {
        objective_value: p.objective(&best_w),
        solver_iterations: evaluated,
        kkt_residual: kkt,
        weights: best_w,
    })
}
