//! Forecast combination for multi-model rainfall prediction.
//!
//! The library combines forecasts from several numerical weather models into
//! a single prediction by (1) clustering historical samples into regimes in
//! standardized forecast space, (2) measuring cross-model redundancy with
//! z-normalized AB-join matrix profiles between the models' forecast series,
//! and (3) fitting one redundancy-regularized simplex weight vector per
//! regime. New samples are routed to the nearest regime centroid and combined
//! with that regime's weights, so the ensemble adapts to conditions instead of
//! using a single fixed weighting.
//!
//! Alongside the combiner itself there are baselines (mean, median,
//! unconstrained regression, a global fixed-weight ensemble), verification
//! metrics, a cross-validated hyperparameter tuner, a seeded synthetic data
//! generator, and brute-force oracles for the matrix profile and the simplex
//! QP used by the test suite.
//!
//! With the default `parallel` feature, pairwise profile computations,
//! per-regime weight solves, and tuner grid points run on rayon; results are
//! identical to the sequential build.

pub mod baselines;
pub mod cluster;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod profile;
pub mod qp;

pub use baselines::{
    fit_global_weights, fit_regression_ensemble, predict_mean, predict_median, EvalMethod,
    ExternalPredictions, GlobalWeightEnsemble, MeanBaseline, MedianBaseline, RegressionEnsemble,
    SingleModel,
};
pub use cluster::{fit_kmeans, RegimeModel};
pub use data::{
    generate_synthetic, load_csv, ForecastDataset, Horizon, ScalerParams, SyntheticConfig,
};
pub use ensemble::{
    fit, tune_grid, HyperGrid, Hyperparams, ScoreRow, TrainedEnsemble, TrainingSummary,
    MODEL_SCHEMA_VERSION,
};
pub use error::{Error, Result};
pub use metrics::{
    comparison_table, error_stats, mae_by_regime, mae_extremes, ComparisonTable, ErrorStats,
    RegimeBreakdown,
};
pub use profile::{
    ab_join_profile, distance_profile, mp_brute_force, psd_project, redundancy_matrix,
    redundancy_matrix_with, MatrixProfileResult, ProfileAggregation, RedundancyMatrix,
};
pub use qp::{kkt_residual, qp_oracle_grid, solve_weights, QpProblem, WeightVector};
