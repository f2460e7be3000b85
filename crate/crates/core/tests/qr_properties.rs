mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use tailqr::data::{standardize, Dataset};
use tailqr::qr::{
    fit_penalized, fit_penalized_warm, fit_unpenalized, mean_quantile_loss, penalized_objective,
    predict, quantile_loss, Algorithm, SolverConfig,
};
use tailqr::QrError;

fn dataset(inst: &Instance) -> Dataset {
    Dataset::from_rows(inst.y.clone(), inst.x.clone(), inst.p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn no_perturbation_improves_the_fit(
        seed in 0u64..10_000,
        n in 15usize..40,
        p in 1usize..6,
        tau in prop::sample::select(vec![0.3, 0.5, 0.9, 0.95]),
        lambda in prop::sample::select(vec![0.0, 0.5, 2.0, 10.0]),
    ) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n, p, tau, lambda);
        let sd = standardize(&dataset(&inst));
        let f = fit_penalized(&sd, &inst.y, tau, lambda, &SolverConfig::default()).unwrap();
        prop_assert!(f.kkt_residual <= 1e-8);
        for _ in 0..20 {
            let b0 = f.intercept + (r.random::<f64>() - 0.5) * 0.2;
            let b: Vec<f64> = f.slopes.iter().map(|v| v + (r.random::<f64>() - 0.5) * 0.2).collect();
            let other = penalized_objective(&sd, &inst.y, tau, lambda, b0, &b);
            prop_assert!(other >= f.objective - 1e-12 * f.objective.abs().max(1.0));
        }
    }

    #[test]
    fn cv_loss_is_the_fitting_loss(resid in prop::collection::vec(-50.0f64..50.0, 1..60), tau in 0.01f64..0.99) {
        let manual: f64 = resid.iter().map(|u| u * (tau - if *u < 0.0 { 1.0 } else { 0.0 })).sum::<f64>()
            / resid.len() as f64;
        let shared = mean_quantile_loss(resid.iter().copied(), tau);
        prop_assert!((manual - shared).abs() <= 1e-12 * manual.abs().max(1.0));
        for u in &resid {
            prop_assert!(quantile_loss(*u, tau) >= 0.0);
        }
    }

    #[test]
    fn warm_start_reaches_the_same_optimum(seed in 0u64..10_000, lambda in 0.5f64..20.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 40, 5, 0.9, lambda);
        let sd = standardize(&dataset(&inst));
        let cfg = SolverConfig::default();
        let first = fit_penalized(&sd, &inst.y, 0.9, 2.0 * lambda, &cfg).unwrap();
        let cold = fit_penalized(&sd, &inst.y, 0.9, lambda, &cfg).unwrap();
        let warm = fit_penalized_warm(&sd, &inst.y, 0.9, lambda, &cfg, Some(&first.basis)).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-10 * cold.objective);
    }
}

#[test]
fn smoothed_path_matches_exact_solver() {
    let mut r = rng(77);
    for (n, p, tau, lambda) in [
        (200, 20, 0.9, 1.0),
        (150, 40, 0.5, 0.3),
        (300, 10, 0.95, 0.0),
    ] {
        let inst = random_instance(&mut r, n, p, tau, lambda);
        let sd = standardize(&dataset(&inst));
        let exact = fit_penalized(&sd, &inst.y, tau, lambda, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            algorithm: Algorithm::SmoothedProximal,
            ..SolverConfig::default()
        };
        let smooth = fit_penalized(&sd, &inst.y, tau, lambda, &cfg).unwrap();
        assert!((exact.objective - smooth.objective).abs() <= 1e-9 * exact.objective);
        assert!(smooth.kkt_residual <= 1e-8);
    }
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let mut r = rng(3);
    let inst = random_instance(&mut r, 60, 8, 0.5, 0.1);
    let sd = standardize(&dataset(&inst));
    let cfg = SolverConfig {
        max_iter: 1,
        ..SolverConfig::default()
    };
    match fit_penalized(&sd, &inst.y, 0.5, 0.1, &cfg) {
        Err(QrError::NotConverged { fit }) => assert!(fit.kkt_residual > 0.0),
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn prediction_is_affine_in_the_raw_point() {
    let mut r = rng(9);
    let inst = random_instance(&mut r, 80, 3, 0.7, 0.0);
    let d = dataset(&inst);
    let sd = standardize(&d);
    let f = fit_unpenalized(&sd, &inst.y, 0.7, &SolverConfig::default()).unwrap();
    let base = predict(&f, &sd, &[0.0, 0.0, 0.0]).unwrap();
    let moved = predict(&f, &sd, &[1.0, 0.0, 0.0]).unwrap();
    assert!((moved - base - f.slopes[0]).abs() < 1e-12);
    assert!(predict(&f, &sd, &[0.0]).is_err());
}

#[test]
fn invalid_arguments_are_rejected() {
    let mut r = rng(1);
    let inst = random_instance(&mut r, 20, 2, 0.5, 0.0);
    let sd = standardize(&dataset(&inst));
    let cfg = SolverConfig::default();
    assert!(matches!(
        fit_penalized(&sd, &inst.y, 1.0, 1.0, &cfg),
        Err(QrError::BadTau(_))
    ));
    assert!(matches!(
        fit_penalized(&sd, &inst.y, 0.5, -1.0, &cfg),
        Err(QrError::BadLambda(_))
    ));
    assert!(fit_penalized(&sd, &inst.y[..5], 0.5, 1.0, &cfg).is_err());
    let wide = Dataset::from_rows(
        vec![1.0, 2.0, 3.0],
        (0..9).map(|v| (v * v) as f64).collect(),
        3,
    )
    .unwrap();
    assert!(matches!(
        fit_unpenalized(&standardize(&wide), &[1.0, 2.0, 3.0], 0.5, &cfg),
        Err(QrError::TooFewObservations { .. })
    ));
}
