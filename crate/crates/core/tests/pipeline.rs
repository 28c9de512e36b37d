use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use sprvm::data::{make_synthetic, standardize_response, Dataset};
use sprvm::diagnostics::CovEstimator;
use sprvm::kernels::build_design;
use sprvm::rng;
use sprvm::rvm::{rvm_run_gibbs, RvmBetaConditional, RvmConfig};
use sprvm::sprvm::{check_propriety, drift_check, run_gibbs};
use sprvm::tune::{
    benchmark, candidate_grid, cross_validate, fit_predictor, rmspe, BenchMethod, BenchOptions, Budget, ModelSettings,
    SamplerModel,
};
use sprvm::{KernelFamily, KernelSpec, Method, Predictor, SprvmConfig};

/// `f(x) = sum_j w_j exp(-|x - c_j|^2)` plus noise.
fn kernel_smooth(n: usize, noise: f64, seed: u64) -> Dataset<f64> {
    let mut r = rng::stream(seed, 0);
    let centres = [[-1.0, 0.5], [0.8, -0.6], [0.2, 1.2], [-0.4, -1.3], [1.5, 0.9]];
    let weights = [1.0, -0.8, 0.6, 0.9, -0.5];
    let x = Array2::from_shape_simple_fn((n, 2), || r.sample::<f64, _>(StandardNormal));
    let y: Array1<f64> = x
        .axis_iter(Axis(0))
        .map(|row| {
            let f: f64 = centres
                .iter()
                .zip(weights)
                .map(|(c, w)| w * (-((row[0] - c[0]).powi(2) + (row[1] - c[1]).powi(2))).exp())
                .sum();
            f + noise * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::new(y, x).unwrap()
}

#[test]
fn cv_choice_close_to_oracle() {
    let all = kernel_smooth(100, 0.05, 1);
    let train_idx: Vec<usize> = (0..60).collect();
    let test_idx: Vec<usize> = (60..100).collect();
    let train = all.subset(&train_idx);
    let test = all.subset(&test_idx);

    let model = SamplerModel {
        method: Method::Sprvm,
        settings: ModelSettings::new(KernelFamily::Gaussian),
        budget: Budget {
            iterations: 600,
            burn_in: 300,
        },
    };
    let grid = candidate_grid(Method::Sprvm, &[0.1, 0.3, 1.0, 3.0, 10.0], &[100.0]);
    let cv = cross_validate(&model, &grid, &train, 5, 7).unwrap();

    let oracle: Vec<f64> = grid
        .iter()
        .map(|c| {
            let p = fit_predictor(Method::Sprvm, &model.settings, c.theta, c.xi, &train, model.budget, 3, 1).unwrap();
            let pred: Array1<f64> = p.predict_batch(test.x.view()).unwrap().iter().map(|r| r.point).collect();
            rmspe(pred.view(), test.y.view()).unwrap()
        })
        .collect();
    let best = oracle.iter().cloned().fold(f64::INFINITY, f64::min);
    let chosen = grid.iter().position(|c| *c == cv.best).unwrap();
    assert!(oracle[chosen] <= 1.1 * best, "chosen {} oracle {:?}", cv.best, oracle);
}

#[test]
fn noiseless_benchmark_is_accurate() {
    let data = make_synthetic::<f64>(50, 2, 0.0, 5).unwrap();
    let opts = BenchOptions {
        methods: vec![BenchMethod::Sprvm],
        splits: 3,
        test_size: 10,
        seed: 11,
        folds: 5,
        theta_grid: vec![0.5, 1.0, 2.0],
        xi_grid: vec![1e2, 1e3, 1e4],
        cv_budget: Budget {
            iterations: 600,
            burn_in: 300,
        },
        final_budget: Budget {
            iterations: 2_000,
            burn_in: 1_000,
        },
        settings: ModelSettings::new(KernelFamily::Gaussian),
    };
    let report = benchmark(&data, &opts).unwrap();
    let s = report.summary(BenchMethod::Sprvm).unwrap();
    assert!(s.mean_rmspe_standardized < 0.2, "{}", report.table());
}

#[test]
fn rvm_conditional_moments_at_several_settings() {
    let d = standardize_response(&make_synthetic::<f64>(5, 2, 0.1, 2).unwrap()).unwrap();
    let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
    let cond = RvmBetaConditional::new(&k, d.y.view()).unwrap();
    let mut r = rng::stream(4, 0);
    for (lambdas, tau) in [
        (Array1::from_vec(vec![0.5, 1.0, 2.0, 0.1, 5.0, 1.0]), 3.0),
        (Array1::from_elem(6, 10.0), 0.2),
    ] {
        let (mean, cov) = cond.moments(lambdas.view(), tau).unwrap();
        let n = 50_000;
        let mut draws = Array2::<f64>::zeros((n, 6));
        for i in 0..n {
            draws.row_mut(i).assign(&cond.sample(lambdas.view(), tau, &mut r).unwrap());
        }
        let m = draws.mean_axis(Axis(0)).unwrap();
        let c = (&draws - &m).t().dot(&(&draws - &m)) / n as f64;
        for i in 0..6 {
            assert!((m[i] - mean[i]).abs() < 4.0 * (cov[[i, i]] / n as f64).sqrt());
            for j in 0..6 {
                let se = ((cov[[i, i]] * cov[[j, j]] + cov[[i, j]].powi(2)) / n as f64).sqrt();
                assert!((c[[i, j]] - cov[[i, j]]).abs() < 4.0 * se, "({i},{j})");
            }
        }
    }
}

#[test]
fn rvm_conditional_mean_follows_row_permutation() {
    let d = standardize_response(&make_synthetic::<f64>(7, 2, 0.1, 3).unwrap()).unwrap();
    let perm = [3usize, 0, 6, 2, 5, 1, 4];
    let pd = d.subset(&perm);
    let spec = KernelSpec::gaussian(1.2).unwrap();
    let k = build_design(&spec, &d.x).unwrap();
    let pk = build_design(&spec, &pd.x).unwrap();
    let lambdas = Array1::from_shape_fn(8, |i| 0.2 + 0.3 * i as f64);
    // Coefficient 0 is the intercept; coefficient i + 1 belongs to row i.
    let mut plambdas = lambdas.clone();
    for (new, &old) in perm.iter().enumerate() {
        plambdas[new + 1] = lambdas[old + 1];
    }
    let m = RvmBetaConditional::new(&k, d.y.view()).unwrap().mean(lambdas.view(), 2.0).unwrap();
    let pm = RvmBetaConditional::new(&pk, pd.y.view()).unwrap().mean(plambdas.view(), 2.0).unwrap();
    assert!((m[0] - pm[0]).abs() < 1e-10);
    for (new, &old) in perm.iter().enumerate() {
        assert!((m[old + 1] - pm[new + 1]).abs() < 1e-10);
    }
}

#[test]
fn rvm_predictions_stable_under_row_reordering() {
    let d = make_synthetic::<f64>(12, 2, 0.1, 4).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let settings = ModelSettings::new(KernelFamily::Gaussian);
    let budget = Budget {
        iterations: 20_000,
        burn_in: 5_000,
    };
    let a = fit_predictor(Method::Rvm, &settings, 1.0, None, &d, budget, 1, 1).unwrap();
    let b = fit_predictor(Method::Rvm, &settings, 1.0, None, &d.subset(&perm), budget, 1, 1).unwrap();
    let probe = make_synthetic::<f64>(5, 2, 0.0, 99).unwrap();
    let pa = a.predict_batch(probe.x.view()).unwrap();
    let pb = b.predict_batch(probe.x.view()).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert!(x.point.is_finite() && y.point.is_finite());
        assert!((x.point - y.point).abs() < 0.1, "{} vs {}", x.point, y.point);
    }
}

#[test]
fn rvm_default_chain_positive() {
    let d = standardize_response(&make_synthetic::<f64>(8, 2, 0.1, 6).unwrap()).unwrap();
    let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
    let draws = rvm_run_gibbs(&RvmConfig::new(10_000).with_seed(3), &k, d.y.view()).unwrap();
    assert!(draws.lambdas.iter().all(|v| *v > 0.0 && v.is_finite()));
    assert!(draws.inv_sigma2.iter().all(|v| *v > 0.0 && v.is_finite()));
    assert!(draws.beta.iter().all(|v| v.is_finite()));
}

#[test]
fn single_precision_pipeline() {
    let d = standardize_response(&make_synthetic::<f32>(10, 2, 0.1, 7).unwrap()).unwrap();
    let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
    assert!(check_propriety(-1.0, 0.0, 10, &k).sufficient_ok);
    let draws = run_gibbs(&SprvmConfig::new(5.0, 1_000).with_seed(1), &k, d.y.view()).unwrap();
    assert!(draws.lambda.iter().all(|l| *l > 0.0 && l.is_finite()));
    let p = Predictor::from_sprvm(&[draws], &d.x, d.scale(), CovEstimator::BatchMeans).unwrap();
    let r = p.predict(d.x.row(0).mapv(f64::from).view()).unwrap();
    assert!(r.point.is_finite() && r.mcse().unwrap() >= 0.0);
}

#[test]
fn drift_contracts_on_a_second_problem() {
    let d = standardize_response(&kernel_smooth(12, 0.1, 8)).unwrap();
    let k = build_design(&KernelSpec::laplace(2.0).unwrap(), &d.x).unwrap();
    let grid: Vec<f64> = (0..9).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect();
    let cfg = SprvmConfig::new(10.0, 1).with_seed(2);
    let r = drift_check(&cfg, &k, d.y.view(), &grid, 0.5, 1.0, 500).unwrap();
    assert!(r.linear_fit_ok, "{r:?}");
}
