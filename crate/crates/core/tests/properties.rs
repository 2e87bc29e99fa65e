mod common;

use censcov::metrics::{lorenz_curve, summarize};
use censcov::resample::stratified_subset;
use censcov::sim::stream_rng;
use censcov::{
    build_event_index, covariate_weights, relative_risk, Dataset, ParameterVector,
    PartialLikelihood, SubjectRecord,
};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (
        any::<u64>(),
        5usize..40,
        0usize..3,
        any::<bool>(),
        0.0f64..0.6,
    )
        .prop_filter_map("needs an event", |(seed, n, p, ties, cens)| {
            let mut rng = stream_rng(seed, 0);
            Dataset::new(common::random_records(&mut rng, n, p, ties, cens)).ok()
        })
}

fn params_for(ds: &Dataset, seed: u64) -> ParameterVector {
    let mut rng = stream_rng(seed, 1);
    use rand::Rng;
    ParameterVector::new(
        rng.random_range(-1.5..1.5),
        (0..ds.p()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn map_records(ds: &Dataset, f: impl Fn(&SubjectRecord) -> SubjectRecord) -> Dataset {
    Dataset::new(ds.records().iter().map(f).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn risk_sets_nested_and_exact(ds in dataset_strategy()) {
        let index = build_event_index(&ds);
        for k in 0..index.n_event_times() {
            let t = index.event_times()[k];
            let mut expected: Vec<usize> = (0..ds.len()).filter(|&j| ds.records()[j].y >= t).collect();
            let mut got = index.risk_set(k).to_vec();
            got.sort_unstable();
            expected.sort_unstable();
            prop_assert_eq!(got, expected);
            if k + 1 < index.n_event_times() {
                prop_assert!(index.risk_set_size(k + 1) <= index.risk_set_size(k));
                prop_assert!(index.event_times()[k + 1] > t);
            }
        }
    }

    #[test]
    fn km_mass_and_permutation(ds in dataset_strategy(), seed in any::<u64>()) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let table = covariate_weights(&ds).unwrap();
        prop_assert!(table.total_mass() <= 1.0 + 1e-12);
        prop_assert!(table.entries().iter().all(|e| e.weight > 0.0));
        let mut order: Vec<usize> = (0..ds.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(seed, 2));
        let permuted = ds.select(&order).unwrap();
        let other = covariate_weights(&permuted).unwrap();
        let pairs = |t: &censcov::CovariateWeightTable| {
            let mut v: Vec<(f64, f64)> = t.entries().iter().map(|e| (e.z, e.weight)).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        let (a, b) = (pairs(&table), pairs(&other));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_match_reference(ds in dataset_strategy()) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let table = covariate_weights(&ds).unwrap();
        let reference = common::km_weights(ds.records());
        prop_assert_eq!(table.len(), reference.len());
        for (e, (z, w)) in table.entries().iter().zip(&reference) {
            prop_assert_eq!(e.z, *z);
            prop_assert!((e.weight - w).abs() < 1e-14);
        }
    }

    #[test]
    fn weight_rescaling_leaves_risk(ds in dataset_strategy(), seed in any::<u64>(), factor in 0.01f64..100.0) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let table = covariate_weights(&ds).unwrap();
        let scaled = table.rescaled(factor);
        let params = params_for(&ds, seed);
        for r in ds.records() {
            match (relative_risk(r, &params, &table), relative_risk(r, &params, &scaled)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "rescaling changed qualification"),
            }
        }
    }

    #[test]
    fn covariate_shift_leaves_likelihood(ds in dataset_strategy(), seed in any::<u64>(), shift in -3.0f64..3.0) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let shifted = map_records(&ds, |r| SubjectRecord { z: r.z + shift + 5.0, ..r.clone() });
        let params = params_for(&ds, seed);
        let (ta, tb) = (covariate_weights(&ds).unwrap(), covariate_weights(&shifted).unwrap());
        let a = PartialLikelihood::new(&ds, Some(&ta)).and_then(|pl| pl.log_partial_likelihood(&params));
        let b = PartialLikelihood::new(&shifted, Some(&tb)).and_then(|pl| pl.log_partial_likelihood(&params));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b),
            (Err(e), Err(f)) => prop_assert_eq!(e, f),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn fixed_covariate_shift_leaves_likelihood(ds in dataset_strategy(), seed in any::<u64>(), shift in -3.0f64..3.0) {
        prop_assume!(ds.p() > 0 && ds.n_covariate_observed() > 0);
        let shifted = map_records(&ds, |r| SubjectRecord { x: r.x.iter().map(|v| v + shift).collect(), ..r.clone() });
        let params = params_for(&ds, seed);
        let table = covariate_weights(&ds).unwrap();
        let a = PartialLikelihood::new(&ds, Some(&table)).and_then(|pl| pl.evaluate(&params));
        let b = PartialLikelihood::new(&shifted, Some(&table)).and_then(|pl| pl.evaluate(&params));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.value - b.value).abs() <= 1e-9 * (1.0 + a.value.abs()));
            prop_assert!((&a.score - &b.score).amax() <= 1e-8 * (1.0 + a.score.amax()));
            prop_assert!((&a.hessian - &b.hessian).amax() <= 1e-8 * (1.0 + a.hessian.amax()));
        }
    }

    #[test]
    fn likelihood_matches_reference(ds in dataset_strategy(), seed in any::<u64>()) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let params = params_for(&ds, seed);
        let table = covariate_weights(&ds).unwrap();
        if let Ok(pl) = PartialLikelihood::new(&ds, Some(&table)) {
            let got = pl.log_partial_likelihood(&params).unwrap();
            let want = common::log_likelihood(ds.records(), params.gamma, &params.beta);
            prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }

    #[test]
    fn hessian_symmetric(ds in dataset_strategy(), seed in any::<u64>()) {
        prop_assume!(ds.n_covariate_observed() > 0);
        let table = covariate_weights(&ds).unwrap();
        if let Ok(pl) = PartialLikelihood::new(&ds, Some(&table)) {
            let h = pl.hessian(&params_for(&ds, seed)).unwrap();
            prop_assert_eq!(h.clone(), h.transpose());
        }
    }

    #[test]
    fn summary_permutation_and_mse_identity(
        est in prop::collection::vec(-3.0f64..3.0, 2..60),
        truth in -1.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let se: Vec<f64> = est.iter().map(|e| 0.1 + e.abs() * 0.05).collect();
        let a = summarize(&est, &se, truth).unwrap();
        let mut order: Vec<usize> = (0..est.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(seed, 3));
        let pe: Vec<f64> = order.iter().map(|&i| est[i]).collect();
        let ps: Vec<f64> = order.iter().map(|&i| se[i]).collect();
        let b = summarize(&pe, &ps, truth).unwrap();
        prop_assert!((a.average - b.average).abs() < 1e-12);
        prop_assert!((a.mse - b.mse).abs() < 1e-12);
        prop_assert_eq!(a.coverage, b.coverage);
        let n = est.len() as f64;
        let identity = a.abs_bias.powi(2) + a.emp_se.powi(2) * (n - 1.0) / n;
        prop_assert!((a.mse - identity).abs() < 1e-12);
    }

    #[test]
    fn lorenz_monotone_with_endpoints(w in prop::collection::vec(0.0f64..10.0, 1..200), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream_rng(seed, 4);
        let mut censored: Vec<bool> = w.iter().map(|_| rng.random_bool(0.3)).collect();
        censored[0] = true;
        let c = lorenz_curve(&w, &censored).unwrap();
        prop_assert_eq!(c.points[0], (0.0, 0.0));
        prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        for pair in c.points.windows(2) {
            prop_assert!(pair[1].0 > pair[0].0 && pair[1].1 >= pair[0].1);
        }
    }

    #[test]
    fn stratified_subsets_keep_arm_ratio(n0 in 1usize..200, n1 in 1usize..200, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let arms = [(0..n0).collect::<Vec<_>>(), (n0..n0 + n1).collect::<Vec<_>>()];
        let size = ((n0 + n1) as f64 * frac).round().max(1.0) as usize;
        let subset = stratified_subset(&arms, size, &mut stream_rng(seed, 5));
        prop_assert_eq!(subset.len(), size);
        let treated = subset.iter().filter(|&&i| i >= n0).count() as f64;
        prop_assert!((treated - size as f64 * n1 as f64 / (n0 + n1) as f64).abs() <= 1.0);
        prop_assert!(subset.windows(2).all(|p| p[0] < p[1]));
    }
}
