//! Property tests for the library's structural invariants.

use proptest::prelude::*;

use regime_ensemble::data::{ForecastDataset, Horizon};
use regime_ensemble::profile::{ab_join_profile, mp_brute_force};
use regime_ensemble::qp::{solve_weights, QpProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use regime_ensemble::{error_stats, predict_mean, predict_median};

fn dataset_strategy() -> impl Strategy<Value = ForecastDataset> {
    (2usize..40, 1usize..5, any::<u64>()).prop_map(|(n, m, seed)| {
        let mut cfg = regime_ensemble::SyntheticConfig::new(n, m, 1, seed);
        cfg.noise_stddev = 0.7;
        regime_ensemble::generate_synthetic(&cfg).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_concat_reproduces_dataset(ds in dataset_strategy(), frac in 0.05f64..0.95) {
        prop_assume!(ds.n() >= 2);
        if let Ok((train, test)) = ds.temporal_split(frac) {
            prop_assert_eq!(train.n() + test.n(), ds.n());
            let mut y = train.y().to_vec();
            y.extend_from_slice(test.y());
            prop_assert_eq!(y, ds.y().to_vec());
            let mut x = train.x().to_vec();
            x.extend_from_slice(test.x());
            prop_assert_eq!(x, ds.x().to_vec());
        }
    }

    #[test]
    fn standardize_commutes_with_row_permutation(ds in dataset_strategy(), rot in 0usize..37) {
        prop_assume!(ds.n() >= 2);
        let (z, _) = ds.standardize().unwrap();
        let n = ds.n();
        let rot = rot % n;
        // Rotate rows, standardize, rotate back: same standardized values.
        let mut x = ds.x().to_vec();
        let mut y = ds.y().to_vec();
        x.rotate_left(rot);
        y.rotate_left(rot);
        let permuted = ForecastDataset::new(
            Horizon::H24,
            ds.timestamps().to_vec(),
            x,
            y,
            ds.model_names().to_vec(),
        )
        .unwrap();
        let (zp, _) = permuted.standardize().unwrap();
        for i in 0..n {
            let orig = &z[(i + rot) % n];
            for (a, b) in zp[i].iter().zip(orig) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scaler_round_trip_is_tight(ds in dataset_strategy()) {
        prop_assume!(ds.n() >= 2);
        let (z, scaler) = ds.standardize().unwrap();
        for (row, zrow) in ds.x().iter().zip(&z) {
            let back = scaler.inverse_row(zrow).unwrap();
            for (a, b) in row.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn join_profile_matches_brute_force(
        seed in any::<u64>(),
        n_a in 20usize..100,
        n_b in 20usize..100,
        m in prop::sample::select(vec![3usize, 5, 10]),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n_a).map(|_| 10.0 + 4.0 * rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..n_b).map(|_| 10.0 + 4.0 * rng.gen::<f64>()).collect();
        prop_assume!(n_a >= m && n_b >= m);
        let fast = ab_join_profile(&a, &b, m).unwrap();
        let brute = mp_brute_force(&a, &b, m).unwrap();
        let bound = 2.0 * (m as f64).sqrt();
        for (x, y) in fast.distances.iter().zip(&brute.distances) {
            prop_assert!((x - y).abs() <= 1e-8);
            prop_assert!(*x >= 0.0 && *x <= bound + 1e-12);
        }
        for &idx in &fast.indices {
            prop_assert!(idx <= n_b - m);
        }
    }

    #[test]
    fn solved_weights_are_always_feasible(
        seed in any::<u64>(),
        n in 2usize..30,
        m in 1usize..5,
        lambda in 0.0f64..5.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| 6.0 * rng.gen::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| 6.0 * rng.gen::<f64>()).collect();
        let s: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.3 }).collect())
            .collect();
        let p = QpProblem::with_penalty(x, y, s, lambda).unwrap();
        let solved = solve_weights(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert!(solved.is_feasible(), "{:?}", solved.weights);
    }

    #[test]
    fn row_aggregates_stay_in_hull(row in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = predict_mean(&row);
        let median = predict_median(&row);
        prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        prop_assert!(median >= lo && median <= hi);
        // Lower median is an order statistic: it is an element of the row.
        prop_assert!(row.contains(&median));
    }

    #[test]
    fn mae_translation_bound(
        obs in prop::collection::vec(0.0f64..30.0, 1..40),
        delta in -5.0f64..5.0,
    ) {
        let preds: Vec<f64> = obs.iter().map(|v| v * 0.9 + 0.3).collect();
        let shifted: Vec<f64> = preds.iter().map(|v| v + delta).collect();
        let base = error_stats(&preds, &obs, Horizon::H1, "p").unwrap();
        let moved = error_stats(&shifted, &obs, Horizon::H1, "p").unwrap();
        prop_assert!(
            (moved.mean_abs_error - base.mean_abs_error).abs() <= delta.abs() + 1e-12
        );
    }
}
