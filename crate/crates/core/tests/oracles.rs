mod common;

use censcov::comparators::impute_censored_covariates;
use censcov::sim::{stream_rng, Generator, ScenarioConfig};
use censcov::{covariate_weights, fit_standard_cox, Dataset, FitOptions};
use nalgebra::DMatrix;

fn observed_dataset(seed: u64, n: usize, p: usize, ties: bool) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    Dataset::new(common::random_records(&mut rng, n, p, ties, 0.0)).unwrap()
}

#[test]
fn standard_cox_stationary_under_reference_likelihood() {
    for seed in 0..20 {
        let ds = observed_dataset(seed, 150, 2, seed % 2 == 0);
        let fit = fit_standard_cox(
            &ds,
            &FitOptions {
                tol: 1e-10,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let theta = fit.estimates();
        let f = |t: &[f64]| common::log_likelihood(ds.records(), t[0], &t[1..]);
        assert!((f(&theta) - fit.loglik).abs() < 1e-9 * fit.loglik.abs());
        let grad = common::fd_gradient(f, &theta, 1e-5);
        assert!(grad.iter().all(|g| g.abs() < 1e-5), "seed {seed}: {grad:?}");

        let jac = common::fd_jacobian(|t| common::fd_gradient(f, t, 1e-4), &theta, 1e-4);
        let d = theta.len();
        let info = DMatrix::from_fn(d, d, |i, j| -jac[i][j]);
        let cov = info.try_inverse().unwrap();
        for i in 0..d {
            for j in 0..d {
                let rel =
                    (cov[(i, j)] - fit.covariance[(i, j)]).abs() / fit.covariance[(i, i)].abs();
                assert!(
                    rel < 1e-3,
                    "seed {seed} ({i},{j}): {} vs {}",
                    cov[(i, j)],
                    fit.covariance[(i, j)]
                );
            }
        }
    }
}

#[test]
fn imputation_matches_reference_mean() {
    for seed in 0..20 {
        let mut rng = stream_rng(seed, 0);
        let records = common::random_records(&mut rng, 60, 1, seed % 3 == 0, 0.4);
        let ds = Dataset::new(records).unwrap();
        let weights = common::km_weights(ds.records());
        let table = covariate_weights(&ds).unwrap();
        let (completed, excluded) = impute_censored_covariates(&ds, &table).unwrap();
        let mut k = 0;
        for (i, r) in ds.records().iter().enumerate() {
            if excluded.contains(&i) {
                assert!(weights.iter().all(|(z, _)| *z <= r.z));
                continue;
            }
            let got = completed.records()[k].z;
            k += 1;
            if r.eta == 1 {
                assert_eq!(got, r.z);
            } else {
                let q: Vec<_> = weights.iter().filter(|(z, _)| *z > r.z).collect();
                let mean = q.iter().map(|(z, w)| z * w).sum::<f64>()
                    / q.iter().map(|(_, w)| w).sum::<f64>();
                assert!((got - mean).abs() < 1e-12);
            }
        }
        assert_eq!(k, completed.len());
    }
}

#[test]
fn generated_data_consistent_with_truth() {
    let configs = [
        ScenarioConfig::scenario1(400, 3),
        ScenarioConfig::scenario2(400, 3, 0.2),
        ScenarioConfig::scenario3(400, 3, 1.0, 0.8),
    ];
    for mut config in configs {
        config.mc_size = 200_000;
        let scenario = config.scenario();
        let g = Generator::new(config).unwrap();
        for rep in 0..5 {
            let data = g.generate(rep).unwrap();
            for (i, r) in data.dataset.records().iter().enumerate() {
                let (w, t) = (data.truth_w[i], data.truth_t[i]);
                assert!(r.z <= w);
                assert_eq!(r.eta == 1, r.z == w);
                if scenario != 2 {
                    assert!(r.y <= t);
                    assert_eq!(r.delta == 1, r.y == t);
                }
            }
            let full = data.full_data();
            assert!(full
                .records()
                .iter()
                .zip(&data.truth_w)
                .all(|(r, &w)| r.eta == 1 && r.z == w));
        }
    }
}

#[test]
fn scenario2_overwrites_ceiling_share_of_pfs_events() {
    let mut config = ScenarioConfig::scenario2(300, 5, 0.15);
    config.mc_size = 100_000;
    let g = Generator::new(config).unwrap();
    for rep in 0..10 {
        let data = g.generate(rep).unwrap();
        let pfs_events = data.dataset.records().iter().filter(|r| r.eta == 1).count();
        let deaths = data
            .dataset
            .records()
            .iter()
            .filter(|r| r.eta == 1 && r.delta == 1 && r.y == r.z)
            .count();
        assert!(deaths >= (0.15 * pfs_events as f64).ceil() as usize);
    }
}

#[test]
fn calibrated_rates_hold_in_large_samples() {
    let cases = [
        (ScenarioConfig::scenario1(100_000, 9), Some(0.30), 0.40),
        (ScenarioConfig::scenario2(100_000, 9, 0.10), None, 0.30),
        (
            ScenarioConfig::scenario3(100_000, 9, 0.5, 2.2),
            Some(0.25),
            0.25,
        ),
    ];
    for (config, cov, out) in cases {
        let g = Generator::new(config).unwrap();
        let data = g.generate(0).unwrap();
        if let Some(cov) = cov {
            assert!((data.covariate_censoring - cov).abs() < 0.01);
        }
        assert!((data.outcome_censoring - out).abs() < 0.01);
    }
}

#[test]
fn replicates_reproducible() {
    let mut config = ScenarioConfig::scenario1(100, 11);
    config.mc_size = 50_000;
    let a = Generator::new(config.clone()).unwrap();
    let b = Generator::new(config).unwrap();
    assert_eq!(a.calibration(), b.calibration());
    assert_eq!(a.generate(4).unwrap(), b.generate(4).unwrap());
    assert_ne!(a.generate(4).unwrap(), a.generate(5).unwrap());
}
