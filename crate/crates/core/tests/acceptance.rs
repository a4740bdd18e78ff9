//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the measured numbers. Run with
//! `cargo test -p regime-ensemble --test acceptance -- --nocapture`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regime_ensemble::baselines::{
    fit_global_weights, EvalMethod, GlobalWeightEnsemble, MeanBaseline, MedianBaseline,
    SingleModel,
};
use regime_ensemble::data::{generate_synthetic, Horizon, SyntheticConfig};
use regime_ensemble::ensemble::{fit, tune_grid, HyperGrid, Hyperparams, TrainedEnsemble};
use regime_ensemble::metrics::{comparison_table, error_stats, mae_by_regime, mae_extremes};
use regime_ensemble::profile::{ab_join_profile, mp_brute_force, redundancy_matrix, RedundancyMatrix};
use regime_ensemble::qp::{
    objective_gradient, qp_oracle_grid, solve_weights, QpProblem, WeightVector, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};

fn mse(predictions: &[f64], observations: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(observations)
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>()
        / predictions.len() as f64
}

fn mae(predictions: &[f64], observations: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(observations)
        .map(|(p, y)| (y - p).abs())
        .sum::<f64>()
        / predictions.len() as f64
}

fn seeded_qp(seed: u64, n: usize, m: usize, lambda: f64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| 3.0 * rng.gen::<f64>()).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let mix: f64 = row.iter().enumerate().map(|(j, v)| v * (j + 1) as f64).sum();
            mix / (m * (m + 1) / 2) as f64 + 0.4 * (rng.gen::<f64>() - 0.5)
        })
        .collect();
    let s: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.35 }).collect())
        .collect();
    QpProblem::with_penalty(x, y, s, lambda).unwrap()
}

/// Zero-bias-on-skilled two-regime construction used by the recovery checks.
fn two_regime_cfg(seed: u64, noise: f64) -> SyntheticConfig {
    let mut cfg = SyntheticConfig::new(360, 3, 2, seed);
    cfg.noise_stddev = noise;
    cfg.truth_log_sigma = 0.35;
    cfg.bias_scale = 9.0;
    cfg.regime_block_len = 30;
    cfg
}

#[test]
fn criterion_01_matrix_profile_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA001);
    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    for rep in 0..13 {
        for &m in &[3usize, 5, 10, 20] {
            let (n_a, n_b) = if rep == 0 {
                (512, 512)
            } else {
                (rng.gen_range(m + 10..=512), rng.gen_range(m + 10..=512))
            };
            let a: Vec<f64> = (0..n_a).map(|_| 6.0 + 3.0 * rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n_b).map(|_| 6.0 + 3.0 * rng.gen::<f64>()).collect();
            let fast = ab_join_profile(&a, &b, m).unwrap();
            let brute = mp_brute_force(&a, &b, m).unwrap();
            assert_eq!(fast.distances.len(), brute.distances.len());
            for (k, (x, y)) in fast.distances.iter().zip(&brute.distances).enumerate() {
                let diff = (x - y).abs();
                worst = worst.max(diff);
                assert!(
                    diff <= 1e-8,
                    "pair {pairs} (m={m}, n_a={n_a}, n_b={n_b}) position {k}: {x} vs {y}"
                );
            }
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(pairs >= 50, "only {pairs} pairs exercised");
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "oracle sweep took {elapsed:?}, budget is 60 s"
    );
    println!(
        "ACCEPTANCE 01 PASS matrix-profile oracle equivalence: {pairs} pairs, \
         worst |diff| {worst:.3e} <= 1e-8, {:.2} s < 60 s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_qp_oracle_equivalence() {
    let start = Instant::now();
    let mut problems = 0usize;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_kkt_ratio = 0.0f64;
    for seed in 0..102u64 {
        let m = 1 + (seed as usize % 3);
        let lambda = [0.0, 0.05, 0.5][(seed as usize / 3) % 3];
        let p = seeded_qp(seed, 12 + (seed as usize % 20), m, lambda);
        let solved = solve_weights(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let oracle = qp_oracle_grid(&p, 1e-3).unwrap();
        let gap = solved.objective_value - oracle.objective_value;
        worst_gap = worst_gap.max(gap);
        assert!(
            gap <= 1e-5,
            "seed {seed}: solver {} vs oracle {}",
            solved.objective_value,
            oracle.objective_value
        );
        let g = objective_gradient(&p, &solved.weights);
        let g_inf = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let bound = 1e-6 * (1.0 + g_inf);
        worst_kkt_ratio = worst_kkt_ratio.max(solved.kkt_residual / bound);
        assert!(
            solved.kkt_residual <= bound,
            "seed {seed}: KKT residual {} exceeds {bound}",
            solved.kkt_residual
        );
        problems += 1;
    }
    let elapsed = start.elapsed();
    assert!(problems >= 100);
    assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?} over the 60 s budget");
    println!(
        "ACCEPTANCE 02 PASS qp oracle equivalence: {problems} problems, worst gap \
         {worst_gap:.3e} <= 1e-5, worst KKT ratio {worst_kkt_ratio:.3e}, {:.2} s < 60 s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_03_simplex_feasibility_everywhere() {
    let mut vectors: Vec<WeightVector> = Vec::new();
    for seed in 0..60u64 {
        let m = 1 + (seed as usize % 4);
        let p = seeded_qp(seed, 10 + (seed as usize % 15), m, 0.02 * seed as f64);
        vectors.push(solve_weights(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap());
    }
    for seed in [1u64, 2, 3] {
        let ds = generate_synthetic(&two_regime_cfg(seed, 0.5)).unwrap();
        for k in [1usize, 2, 3] {
            let ens = fit(&ds, &Hyperparams::new(k, 10, 0.1, seed)).unwrap();
            vectors.extend(ens.weights.iter().cloned());
        }
        let series: Vec<Vec<f64>> = (0..ds.n_models()).map(|j| ds.model_series(j)).collect();
        let s = redundancy_matrix(&series, 10).unwrap();
        for lambda in [0.0, 0.1, 1.0] {
            vectors.push(fit_global_weights(&ds, lambda, &s).unwrap());
        }
    }
    let checked = vectors.len();
    for (i, wv) in vectors.iter().enumerate() {
        let sum: f64 = wv.weights.iter().sum();
        assert!(
            wv.weights.iter().all(|&w| (0.0..=1.0).contains(&w)),
            "vector {i} out of [0,1]: {:?}",
            wv.weights
        );
        assert!((sum - 1.0).abs() <= 1e-9, "vector {i} sums to {sum}");
    }
    println!(
        "ACCEPTANCE 03 PASS simplex feasibility: {checked} weight vectors all in [0,1] \
         with |sum - 1| <= 1e-9"
    );
}

#[test]
fn criterion_04_regime_split_never_hurts_training_mse() {
    let mut checked = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for round in 0..21u64 {
        let k = [2usize, 3, 5][(round % 3) as usize];
        let mut cfg = two_regime_cfg(1_000 + round, 0.6);
        cfg.n_regimes = 1 + (round % 3) as usize;
        cfg.skilled_models = (0..cfg.n_regimes).map(|r| r % cfg.n_models).collect();
        let ds = generate_synthetic(&cfg).unwrap();
        let hp = Hyperparams::new(k, 10, 0.0, round);
        let ens = fit(&ds, &hp).unwrap();

        let series: Vec<Vec<f64>> = (0..ds.n_models()).map(|j| ds.model_series(j)).collect();
        let s = redundancy_matrix(&series, 10).unwrap();
        let global = fit_global_weights(&ds, 0.0, &s).unwrap();
        let global_preds: Vec<f64> = ds
            .x()
            .iter()
            .map(|row| global.weights.iter().zip(row).map(|(w, x)| w * x).sum())
            .collect();
        let ens_preds = ens.predict_batch(ds.x()).unwrap();
        let gap = mse(&ens_preds, ds.y()) - mse(&global_preds, ds.y());
        worst = worst.max(gap);
        assert!(
            gap <= 1e-9,
            "round {round} (K={k}): regime MSE exceeds global by {gap:.3e}"
        );
        checked += 1;
    }
    assert!(checked >= 20);
    println!(
        "ACCEPTANCE 04 PASS training-MSE superiority at lambda 0: {checked} datasets, \
         worst (regime - global) gap {worst:.3e} <= 1e-9, zero violations"
    );
}

#[test]
fn criterion_05_k1_reduces_to_global_fixed_weights() {
    let ds = generate_synthetic(&two_regime_cfg(7, 0.5)).unwrap();
    for lambda in [0.0, 0.1] {
        let hp = Hyperparams::new(1, 10, lambda, 11);
        let ens = fit(&ds, &hp).unwrap();
        let series: Vec<Vec<f64>> = (0..ds.n_models()).map(|j| ds.model_series(j)).collect();
        let s = redundancy_matrix(&series, 10).unwrap();
        let global = fit_global_weights(&ds, lambda, &s).unwrap();
        for (a, b) in ens.weights[0].weights.iter().zip(&global.weights) {
            assert!((a - b).abs() <= 1e-10, "lambda {lambda}: {a} vs {b}");
        }
        for i in 0..ds.n() {
            let via_ens = ens.predict(ds.row(i)).unwrap();
            let via_global: f64 = global
                .weights
                .iter()
                .zip(ds.row(i))
                .map(|(w, x)| w * x)
                .sum();
            assert_eq!(via_ens, via_global, "row {i} at lambda {lambda}");
        }
    }
    println!(
        "ACCEPTANCE 05 PASS K=1 reduction: weights match the global fixed-weight fit \
         within 1e-10 and predictions are identical"
    );
}

#[test]
fn criterion_06_regime_recovery_benchmark() {
    let start = Instant::now();

    // Zero-noise construction: exact recovery.
    let cfg = two_regime_cfg(42, 0.0);
    let ds = generate_synthetic(&cfg).unwrap();
    let (train, test) = ds.temporal_split(0.75).unwrap();
    let ens = fit(&train, &Hyperparams::new(2, 10, 0.0, 4)).unwrap();
    // Map fitted clusters to generator regimes by majority over training rows.
    let mut votes = [[0usize; 2]; 2];
    for i in 0..train.n() {
        let c = ens.assign_raw(train.row(i)).unwrap();
        votes[c][cfg.regime_label(i)] += 1;
    }
    for (c, vote) in votes.iter().enumerate() {
        let regime = usize::from(vote[1] > vote[0]);
        let purity = vote[regime] as f64 / (vote[0] + vote[1]) as f64;
        assert!(purity == 1.0, "cluster {c} purity {purity}");
        let skilled = cfg.skilled_models[regime];
        assert!(
            ens.weights[c].weights[skilled] >= 0.99,
            "cluster {c}: weight {:?} on skilled model {skilled}",
            ens.weights[c].weights
        );
    }
    let test_preds = ens.predict_batch(test.x()).unwrap();
    let clean_mae = mae(&test_preds, test.y());
    assert!(clean_mae <= 1e-6, "zero-noise test MAE {clean_mae}");

    // Noisy construction: the tuned regime ensemble must beat the best single
    // model and the global fixed-weight ensemble on held-out data.
    let cfg = two_regime_cfg(43, 0.5);
    let ds = generate_synthetic(&cfg).unwrap();
    let (train, test) = ds.temporal_split(0.75).unwrap();
    let grid = HyperGrid {
        clusters: vec![2],
        windows: vec![10],
        lambdas: vec![0.01, 0.1, 1.0],
    };
    let (best_hp, _) = tune_grid(&train, &grid, 3, 4).unwrap();
    let ens = fit(&train, &best_hp).unwrap();
    let ens_mae = mae(&ens.predict_batch(test.x()).unwrap(), test.y());

    let mut best_single = f64::INFINITY;
    for j in 0..test.n_models() {
        let preds: Vec<f64> = test.x().iter().map(|row| row[j]).collect();
        best_single = best_single.min(mae(&preds, test.y()));
    }
    let series: Vec<Vec<f64>> = (0..train.n_models()).map(|j| train.model_series(j)).collect();
    let s = redundancy_matrix(&series, best_hp.window).unwrap();
    let global = fit_global_weights(&train, best_hp.lambda, &s).unwrap();
    let global_preds: Vec<f64> = test
        .x()
        .iter()
        .map(|row| global.weights.iter().zip(row).map(|(w, x)| w * x).sum())
        .collect();
    let global_mae = mae(&global_preds, test.y());

    assert!(
        ens_mae < best_single,
        "regime ensemble {ens_mae} not below best single model {best_single}"
    );
    assert!(
        ens_mae < global_mae,
        "regime ensemble {ens_mae} not below global fixed weights {global_mae}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "{elapsed:?} over the 120 s budget");
    println!(
        "ACCEPTANCE 06 PASS regime recovery: zero-noise test MAE {clean_mae:.2e} <= 1e-6; \
         noisy test MAE {ens_mae:.4} vs best single {best_single:.4} \
         (margin {:.4}) and global {global_mae:.4} (margin {:.4}); {:.2} s < 120 s",
        best_single - ens_mae,
        global_mae - ens_mae,
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_07_dominant_penalty_forces_uniform_weights() {
    let mut worst = 0.0f64;
    for seed in [0u64, 5, 9] {
        for m in [2usize, 3] {
            let identity = RedundancyMatrix::identity(m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..m).map(|_| 3.0 * rng.gen::<f64>()).collect())
                .collect();
            // Data-fit optimum is far from uniform (all weight on model 0);
            // the penalty has to do the work.
            let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
            let p = QpProblem::new(x.clone(), y.clone(), &identity, 1e6).unwrap();
            let solved = solve_weights(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let unpenalized =
                solve_weights(&QpProblem::new(x, y, &identity, 0.0).unwrap(), DEFAULT_TOL,
                    DEFAULT_MAX_ITER)
                .unwrap();
            assert!(unpenalized.weights[0] > 0.99, "construction sanity check");
            for &w in &solved.weights {
                let dev = (w - 1.0 / m as f64).abs();
                worst = worst.max(dev);
                assert!(dev <= 1e-3, "seed {seed} m {m}: weights {:?}", solved.weights);
            }
        }
    }
    println!(
        "ACCEPTANCE 07 PASS dominant penalty: lambda 1e6 with identity penalty gives \
         uniform weights, worst deviation {worst:.3e} <= 1e-3"
    );
}

#[test]
fn criterion_08_tuner_returns_grid_minimum() {
    let cfg = two_regime_cfg(99, 0.6);
    let ds = generate_synthetic(&cfg).unwrap();
    let grid = HyperGrid::default();
    let (best_a, table_a) = tune_grid(&ds, &grid, 3, 7).unwrap();
    let (best_b, table_b) = tune_grid(&ds, &grid, 3, 7).unwrap();
    assert_eq!(table_a.len(), 27, "score table must cover the full 3x3x3 grid");
    assert_eq!(best_a, best_b, "tuner must be deterministic across runs");
    assert_eq!(table_a, table_b);
    assert!(table_a.iter().all(|row| row.cv_mse.is_finite()));

    // Independent argmin with the lexicographic tie rule.
    let mut want = &table_a[0];
    for row in &table_a {
        let better = row.cv_mse < want.cv_mse
            || (row.cv_mse == want.cv_mse
                && (row.n_clusters, row.window, row.lambda)
                    < (want.n_clusters, want.window, want.lambda));
        if better {
            want = row;
        }
    }
    assert_eq!(
        (best_a.n_clusters, best_a.window, best_a.lambda),
        (want.n_clusters, want.window, want.lambda)
    );
    println!(
        "ACCEPTANCE 08 PASS tuner contract: 27-row table, deterministic, best = \
         (K={}, m={}, lambda={}) with CV-MSE {:.6}",
        best_a.n_clusters, best_a.window, best_a.lambda, want.cv_mse
    );
}

#[test]
fn criterion_09_determinism_and_persistence() {
    let run = || -> (String, String, String, Vec<f64>) {
        let cfg = two_regime_cfg(123, 0.5);
        let ds = generate_synthetic(&cfg).unwrap();
        let mut data_csv = Vec::new();
        ds.write_csv(&mut data_csv).unwrap();
        let (train, test) = ds.temporal_split(0.8).unwrap();
        let ens = fit(&train, &Hyperparams::new(2, 10, 0.1, 17)).unwrap();
        let model_json = ens.to_json().unwrap();
        let preds = ens.predict_batch(test.x()).unwrap();
        let methods: Vec<&dyn EvalMethod> = vec![&ens, &MeanBaseline, &MedianBaseline];
        let report_csv = comparison_table(&methods, std::slice::from_ref(&test))
            .unwrap()
            .to_csv();
        (
            String::from_utf8(data_csv).unwrap(),
            model_json,
            report_csv,
            preds,
        )
    };
    let (data_a, model_a, report_a, preds_a) = run();
    let (data_b, model_b, report_b, preds_b) = run();
    assert_eq!(data_a, data_b, "dataset CSV must be byte-identical");
    assert_eq!(model_a, model_b, "model JSON must be byte-identical");
    assert_eq!(report_a, report_b, "report CSV must be byte-identical");
    assert_eq!(preds_a, preds_b);

    // Save/load round trip preserves predictions exactly.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let cfg = two_regime_cfg(123, 0.5);
    let ds = generate_synthetic(&cfg).unwrap();
    let (train, test) = ds.temporal_split(0.8).unwrap();
    let ens = fit(&train, &Hyperparams::new(2, 10, 0.1, 17)).unwrap();
    ens.save(&path).unwrap();
    let loaded = TrainedEnsemble::load(&path).unwrap();
    assert_eq!(loaded, ens);
    for row in test.x() {
        assert_eq!(ens.predict(row).unwrap(), loaded.predict(row).unwrap());
    }
    println!(
        "ACCEPTANCE 09 PASS determinism & persistence: re-runs byte-identical \
         ({} B model JSON, {} B report CSV); save/load predictions exact",
        model_a.len(),
        report_a.len()
    );
}

#[test]
fn criterion_10_metric_identities() {
    // Closed forms.
    let stats = error_stats(&[0.0, 2.0], &[1.0, 1.0], Horizon::H1, "m").unwrap();
    assert_eq!(stats.mean_abs_error, 1.0);
    assert_eq!(stats.std_error, 1.0);
    let stats = error_stats(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0], Horizon::H1, "m").unwrap();
    assert_eq!(stats.mean_abs_error, 1.0);
    assert!((stats.std_error - 2.0f64.sqrt()).abs() <= 1e-15);
    let y = vec![0.3, 4.4, 2.2, 9.9];
    let perfect = error_stats(&y, &y, Horizon::H12, "m").unwrap();
    assert_eq!((perfect.mean_abs_error, perfect.std_error), (0.0, 0.0));

    // Percentile rule and degenerate subset.
    let observations: Vec<f64> = (1..=10).map(|v| v as f64).collect();
    let (overall, extreme) = mae_extremes(&[0.0; 10], &observations, 90.0).unwrap();
    assert_eq!(extreme, 10.0);
    assert_eq!(overall, 5.5);
    assert!(mae_extremes(&[0.0; 4], &[3.3; 4], 90.0).is_err());

    // Regime counts partition the dataset.
    let ds = generate_synthetic(&two_regime_cfg(5, 0.5)).unwrap();
    let (train, test) = ds.temporal_split(0.7).unwrap();
    for k in [1usize, 2, 4] {
        let ens = fit(&train, &Hyperparams::new(k, 10, 0.1, 2)).unwrap();
        let breakdown = mae_by_regime(&ens, &test).unwrap();
        assert_eq!(breakdown.total_count(), test.n(), "K={k}");
        if k == 1 {
            let preds = ens.predict_batch(test.x()).unwrap();
            let overall = mae(&preds, test.y());
            assert!((breakdown.rows[0].mae - overall).abs() <= 1e-12);
        }
    }

    // The comparison harness agrees with error_stats.
    let ens = fit(&train, &Hyperparams::new(2, 10, 0.1, 2)).unwrap();
    let single = SingleModel {
        index: 0,
        label: "model_1".into(),
    };
    let global_series: Vec<Vec<f64>> = (0..train.n_models()).map(|j| train.model_series(j)).collect();
    let s = redundancy_matrix(&global_series, 10).unwrap();
    let global = GlobalWeightEnsemble {
        weights: fit_global_weights(&train, 0.1, &s).unwrap(),
        label: "fixed-weights".into(),
    };
    let methods: Vec<&dyn EvalMethod> = vec![&ens, &global, &single, &MeanBaseline];
    let table = comparison_table(&methods, std::slice::from_ref(&test)).unwrap();
    for (i, method) in methods.iter().enumerate() {
        let preds = method.predict_dataset(&test).unwrap();
        let stats = error_stats(&preds, test.y(), test.horizon(), method.name()).unwrap();
        assert_eq!(table.mae[i][0], stats.mean_abs_error);
        assert_eq!(table.std_err[i][0], stats.std_error);
    }
    println!(
        "ACCEPTANCE 10 PASS metric identities: closed forms exact, percentile rule \
         exact, regime counts partition n, table consistent with error_stats"
    );
}
