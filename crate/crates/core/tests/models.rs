mod common;

use common::*;
use hypersteal::models::{lasso_lambda_max, ModelDocument};
use hypersteal::prelude::*;
use nalgebra::{DMatrix, DVector};

#[test]
fn smooth_gradients_match_finite_differences() {
    for id in SMOOTH {
        let spec = spec(id);
        for seed in 0..5 {
            let ds = random_dataset(id, 10, 4, seed);
            let k = id.is_kernel().then(|| gram_unit(&ds));
            let params = random_params(&spec, &ds, 100 + seed);
            let hp = Hyperparams::new(0.37);
            let g = subgradient(&spec, &hp, &params, &ds, k.as_ref(), &Masking::default()).unwrap();
            let fd = objective_fd(&spec, &hp, &params, &ds, k.as_ref(), 1e-6);
            let err = relative_inf(&fd, &g);
            assert!(err <= 1e-4, "{id} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn converged_smooth_models_are_stationary() {
    let cfg = TrainConfig::default();
    for id in [
        Algorithm::Ridge,
        Algorithm::KernelRidge,
        Algorithm::L2Logistic,
        Algorithm::L2KernelLogistic,
        Algorithm::SvmSquaredHinge,
        Algorithm::KernelSvmSquaredHinge,
    ] {
        let spec = spec(id);
        let ds = random_dataset(id, 30, 4, 9);
        let k = id.is_kernel().then(|| gram_unit(&ds));
        let hp = Hyperparams::new(0.1);
        let params = train(&spec, &hp, &ds, k.as_ref(), &cfg).unwrap();
        assert!(params.solver_report.converged, "{id} did not converge");
        let g = subgradient(&spec, &hp, &params, &ds, k.as_ref(), &cfg.masking).unwrap();
        assert!(g.amax() <= 10.0 * cfg.tol, "{id}: gradient {:e}", g.amax());
    }
}

#[test]
fn direct_solutions_satisfy_their_linear_systems() {
    let ds = diabetes();
    let cfg = TrainConfig::default();
    for lambda in [1e-3, 1.0, 1e3] {
        let hp = Hyperparams::new(lambda);
        let w = train(&AlgorithmSpec::new(Algorithm::Ridge), &hp, &ds, None, &cfg).unwrap();
        let w = w.primal_w().unwrap();
        let x = ds.x();
        let lhs = x.tr_mul(x) * w + w * lambda;
        let rhs = x.tr_mul(ds.y());
        assert!((&lhs - &rhs).norm() / rhs.norm() <= 1e-10);

        let spec = AlgorithmSpec::new(Algorithm::KernelRidge);
        let k = gram_gaussian_auto(&ds, 10.0).unwrap();
        let alpha = train(&spec, &hp, &ds, Some(&k), &cfg).unwrap();
        let alpha = alpha.dual_alpha().unwrap();
        let lhs = k.mul(alpha) + alpha * lambda;
        assert!((&lhs - ds.y()).norm() / ds.y().norm() <= 1e-10);
    }
}

/// Every solver is deterministic, so training with a budget of `t`
/// iterations reproduces the `t`-th iterate of a longer run.
#[test]
fn objective_never_increases_along_iterations() {
    for id in [
        Algorithm::Lasso,
        Algorithm::ElasticNet,
        Algorithm::L2Logistic,
        Algorithm::L1Logistic,
        Algorithm::SvmSquaredHinge,
        Algorithm::L2KernelLogistic,
        Algorithm::KernelSvmSquaredHinge,
        Algorithm::NnRegression,
        Algorithm::NnClassification,
    ] {
        let spec = spec(id);
        let ds = random_dataset(id, 25, 4, 3);
        let k = id.is_kernel().then(|| gram_unit(&ds));
        let hp = if id == Algorithm::ElasticNet { Hyperparams::elastic(0.2, 0.1) } else { Hyperparams::new(0.05) };
        let mut previous = f64::INFINITY;
        for t in 1..=12 {
            let cfg = TrainConfig::default().with_max_iters(t);
            let params = train(&spec, &hp, &ds, k.as_ref(), &cfg).unwrap();
            let value = objective(&spec, &hp, &params, &ds, k.as_ref()).unwrap();
            assert!(value <= previous * (1.0 + 1e-12), "{id}: iteration {t} raised {previous} to {value}");
            previous = value;
        }
    }
}

#[test]
fn lasso_just_below_lambda_max_keeps_one_coordinate() {
    let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.5])).unwrap();
    let lambda_max = lasso_lambda_max(&ds);
    let spec = AlgorithmSpec::new(Algorithm::Lasso);
    let params = train(&spec, &Hyperparams::new(0.99 * lambda_max), &ds, None, &TrainConfig::default()).unwrap();
    let nonzero = params.primal_w().unwrap().iter().filter(|v| v.abs() > 1e-10).count();
    assert_eq!(nonzero, 1);
}

#[test]
fn lasso_on_diabetes_shrinks_with_lambda() {
    let ds = diabetes();
    let spec = AlgorithmSpec::new(Algorithm::Lasso);
    let cfg = TrainConfig::default();
    let mut last = usize::MAX;
    for lambda in [1e-3, 10.0, 300.0, 1500.0] {
        let p = train(&spec, &Hyperparams::new(lambda), &ds, None, &cfg).unwrap();
        let support = p.primal_w().unwrap().iter().filter(|v| v.abs() > 1e-10).count();
        assert!(support <= last);
        last = support;
    }
    let p = train(&spec, &Hyperparams::new(lasso_lambda_max(&ds)), &ds, None, &cfg).unwrap();
    assert!(p.solver_report.degenerate);
    assert_eq!(p.primal_w().unwrap().amax(), 0.0);
}

#[test]
fn trained_models_round_trip_through_json_exactly() {
    let cfg = TrainConfig::default();
    for id in Algorithm::ALL {
        let spec = spec(id);
        let ds = random_dataset(id, 12, 3, 1);
        let k = id.is_kernel().then(|| gram_unit(&ds));
        let hp = if id == Algorithm::ElasticNet { Hyperparams::elastic(0.1, 0.2) } else { Hyperparams::new(0.1) };
        let params = train(&spec, &hp, &ds, k.as_ref(), &cfg.with_max_iters(200)).unwrap();
        let doc = ModelDocument::new(spec, hp, &params);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back.params().unwrap().block, params.block, "{id}");
        assert_eq!(back.hyperparams, hp);
        assert_eq!(back.algorithm, spec);
    }
}

#[test]
fn kernel_predictions_on_training_points_equal_gram_products() {
    let ds = random_dataset(Algorithm::L2KernelLogistic, 20, 3, 4);
    let spec = AlgorithmSpec::new(Algorithm::L2KernelLogistic).with_sigma(1.0);
    let k = hypersteal::kernels::gram_gaussian(&ds, 1.0, 0.0).unwrap();
    let params = train(&spec, &Hyperparams::new(0.1), &ds, Some(&k), &TrainConfig::default()).unwrap();
    let probs = predict(&spec, &params, ds.x(), Some(ds.x())).unwrap();
    let scores = k.mul(params.dual_alpha().unwrap());
    for i in 0..ds.n() {
        assert!((probs[i] - hypersteal::models::sigmoid(scores[i])).abs() <= 1e-12);
    }
}
