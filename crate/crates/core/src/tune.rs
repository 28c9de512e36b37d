//! Hyperparameter tuning by k-fold cross validation and the repeated
//! random-split RMSPE benchmark.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_plan, standardize_response, train_test_split, CovariateScaling, Dataset};
use crate::diagnostics::CovEstimator;
use crate::error::{Error, Result};
use crate::kernels::{build_design, KernelFamily, KernelSpec};
use crate::marglik::optimize_marglik;
use crate::predict::{Method, Predictor};
use crate::rng::derive_seed;
use crate::rvm::{rvm_run_chains, RvmConfig};
use crate::sprvm::{run_chains, SprvmConfig};

/// `sqrt(mean((pred - truth)^2))`.
pub fn rmspe(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("RMSPE of an empty vector"));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn logspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

/// 13 log-spaced values on `[0.1, 1000]`; degrees 1 to 5 for the
/// polynomial kernel.
pub fn default_theta_grid(family: KernelFamily) -> Vec<f64> {
    match family {
        KernelFamily::Polynomial => (1..=5).map(f64::from).collect(),
        _ => logspace(1e-1, 1e3, 13),
    }
}

/// 13 log-spaced values on `[0.01, 10000]`.
pub fn default_xi_grid() -> Vec<f64> {
    logspace(1e-2, 1e4, 13)
}

/// Total scans and how many of them are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub iterations: usize,
    pub burn_in: usize,
}

impl Budget {
    pub const CV: Budget = Budget {
        iterations: 2_000,
        burn_in: 1_000,
    };
    pub const FINAL: Budget = Budget {
        iterations: 10_000,
        burn_in: 5_000,
    };

    pub fn draws(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "budget keeps no draws: {} iterations with {} burn-in",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Model settings shared by every fit in a tuning or benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub family: KernelFamily,
    /// `(a, b)` for the single-penalty prior.
    pub sprvm_prior: (f64, f64),
    /// `(a, b, c, d)` for the multi-penalty model.
    pub rvm_prior: (f64, f64, f64, f64),
    pub scale_covariates: bool,
    pub estimator: CovEstimator,
}

impl ModelSettings {
    pub fn new(family: KernelFamily) -> Self {
        ModelSettings {
            family,
            sprvm_prior: (-1.0, 0.0),
            rvm_prior: (0.001, 0.01, 0.0, 0.0),
            scale_covariates: false,
            estimator: CovEstimator::BatchMeans,
        }
    }
}

/// Fits on `train` (raw response; standardized here) and returns a
/// predictor that reports on the raw scale. `xi` is ignored for RVM.
#[allow(clippy::too_many_arguments)]
pub fn fit_predictor(
    method: Method,
    settings: &ModelSettings,
    theta: f64,
    xi: Option<f64>,
    train: &Dataset<f64>,
    budget: Budget,
    seed: u64,
    chains: usize,
) -> Result<Predictor> {
    budget.validate()?;
    let std_train = standardize_response(train)?;
    let scaling = settings.scale_covariates.then(|| CovariateScaling::fit(&std_train.x));
    let x = match &scaling {
        Some(s) => s.apply(&std_train.x),
        None => std_train.x.clone(),
    };
    let spec = KernelSpec::new(settings.family, theta)?;
    let k = build_design(&spec, &x)?;
    let chains = chains.max(1);
    let predictor = match method {
        Method::Sprvm => {
            let xi = xi.ok_or_else(|| Error::invalid("single-penalty fit needs xi"))?;
            let (a, b) = settings.sprvm_prior;
            let cfg = SprvmConfig::new(xi, budget.draws())
                .with_prior(a, b)
                .with_burn_in(budget.burn_in)
                .with_seed(seed);
            let draws = run_chains(&cfg, &k, std_train.y.view(), chains)?;
            Predictor::from_sprvm(&draws, &x, std_train.scale(), settings.estimator)?
        }
        Method::Rvm => {
            let (a, b, c, d) = settings.rvm_prior;
            let cfg = RvmConfig {
                a,
                b,
                c,
                d,
                ..RvmConfig::new(budget.draws()).with_burn_in(budget.burn_in).with_seed(seed)
            };
            let draws = rvm_run_chains(&cfg, &k, std_train.y.view(), chains)?;
            Predictor::from_rvm(&draws, &x, std_train.scale())?
        }
    };
    Ok(predictor.with_covariate_scaling(scaling))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub theta: f64,
    /// `None` for the multi-penalty model.
    pub xi: Option<f64>,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.xi {
            Some(xi) => write!(f, "theta={} xi={}", self.theta, xi),
            None => write!(f, "theta={}", self.theta),
        }
    }
}

/// Candidate grid for `method`: `theta` alone for RVM, the product
/// `theta x xi` (theta-major) for SPRVM.
pub fn candidate_grid(method: Method, theta_grid: &[f64], xi_grid: &[f64]) -> Vec<Candidate> {
    match method {
        Method::Rvm => theta_grid.iter().map(|&theta| Candidate { theta, xi: None }).collect(),
        Method::Sprvm => theta_grid
            .iter()
            .flat_map(|&theta| xi_grid.iter().map(move |&xi| Candidate { theta, xi: Some(xi) }))
            .collect(),
    }
}

/// What cross validation needs from a model: fit on training rows, predict
/// raw-scale responses at held-out covariates. Held-out responses are never
/// passed in.
pub trait FoldModel: Sync {
    fn method(&self) -> Method;
    fn fit_predict(&self, train: &Dataset<f64>, test_x: &Array2<f64>, candidate: &Candidate, seed: u64) -> Result<Array1<f64>>;
}

/// The samplers with a fixed budget.
#[derive(Debug, Clone)]
pub struct SamplerModel {
    pub method: Method,
    pub settings: ModelSettings,
    pub budget: Budget,
}

impl FoldModel for SamplerModel {
    fn method(&self) -> Method {
        self.method
    }

    fn fit_predict(&self, train: &Dataset<f64>, test_x: &Array2<f64>, candidate: &Candidate, seed: u64) -> Result<Array1<f64>> {
        let p = fit_predictor(self.method, &self.settings, candidate.theta, candidate.xi, train, self.budget, seed, 1)?;
        Ok(p.predict_batch(test_x.view())?.iter().map(|r| r.point).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: Candidate,
    /// Mean of the per-fold RMSPEs; `None` when any fold failed.
    pub cv_rmspe: Option<f64>,
    pub fold_rmspe: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub schema_version: u32,
    pub method: Method,
    pub grid: Vec<CandidateScore>,
    pub best: Candidate,
    pub best_rmspe: f64,
    pub folds: usize,
    pub seed: u64,
}

pub const SCHEMA_VERSION: u32 = 1;

/// k-fold cross validation over `grid`. Each (candidate, fold) fit gets its
/// own seed; a failing fit disqualifies only its candidate. The first
/// minimum in grid order wins.
pub fn cross_validate<M: FoldModel>(model: &M, grid: &[Candidate], data: &Dataset<f64>, k: usize, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("cross-validation grid is empty"));
    }
    let raw = data.raw_y();
    let folds = kfold_plan(data.n(), k, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let plan = &folds[f];
            let mut train = data.subset(&plan.train_indices);
            train.y = raw.select(ndarray::Axis(0), &plan.train_indices);
            train.standardization = None;
            let test_x = data.x.select(ndarray::Axis(0), &plan.test_indices);
            let pred = model.fit_predict(&train, &test_x, &grid[c], derive_seed(seed, (c * k + f) as u64))?;
            let truth = raw.select(ndarray::Axis(0), &plan.test_indices);
            rmspe(pred.view(), truth.view())
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    for (c, cand) in grid.iter().enumerate() {
        let mut fold_rmspe = Vec::with_capacity(k);
        let mut failure = None;
        for r in &results[c * k..(c + 1) * k] {
            match r {
                Ok(v) => fold_rmspe.push(*v),
                Err(e) => {
                    failure.get_or_insert_with(|| e.to_string());
                }
            }
        }
        if let Some(reason) = &failure {
            log::warn!("candidate {cand} failed during cross validation: {reason}");
        }
        let cv_rmspe = failure.is_none().then(|| fold_rmspe.iter().sum::<f64>() / k as f64);
        scores.push(CandidateScore {
            candidate: *cand,
            cv_rmspe,
            fold_rmspe,
            failure,
        });
    }
    let (best, best_rmspe) = scores
        .iter()
        .filter_map(|s| s.cv_rmspe.map(|v| (s.candidate, v)))
        .fold(None, |acc: Option<(Candidate, f64)>, (c, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((c, v)),
        })
        .ok_or_else(|| Error::invalid("every cross-validation candidate failed"))?;
    Ok(CvResult {
        schema_version: SCHEMA_VERSION,
        method: model.method(),
        grid: scores,
        best,
        best_rmspe,
        folds: k,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchMethod {
    #[serde(rename = "RVM")]
    Rvm,
    #[serde(rename = "SPRVM")]
    Sprvm,
    #[serde(rename = "SPRVM-ML")]
    SprvmMl,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMethod::Rvm => "RVM",
            BenchMethod::Sprvm => "SPRVM",
            BenchMethod::SprvmMl => "SPRVM-ML",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rvm" => Ok(BenchMethod::Rvm),
            "sprvm" => Ok(BenchMethod::Sprvm),
            "sprvm-ml" | "sprvm_ml" => Ok(BenchMethod::SprvmMl),
            other => Err(Error::invalid(format!(
                "unknown benchmark method '{other}' (expected rvm, sprvm or sprvm-ml)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub methods: Vec<BenchMethod>,
    pub splits: usize,
    pub test_size: usize,
    pub seed: u64,
    pub folds: usize,
    pub theta_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub cv_budget: Budget,
    pub final_budget: Budget,
    pub settings: ModelSettings,
}

impl BenchOptions {
    pub fn new(family: KernelFamily) -> Self {
        BenchOptions {
            methods: vec![BenchMethod::Rvm, BenchMethod::Sprvm, BenchMethod::SprvmMl],
            splits: 20,
            test_size: 10,
            seed: 0,
            folds: 10,
            theta_grid: default_theta_grid(family),
            xi_grid: default_xi_grid(),
            cv_budget: Budget::CV,
            final_budget: Budget::FINAL,
            settings: ModelSettings::new(family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDetail {
    pub split: usize,
    pub seed: u64,
    pub method: BenchMethod,
    pub theta: Option<f64>,
    pub xi: Option<f64>,
    pub rmspe: Option<f64>,
    /// RMSPE divided by the training-response sd.
    pub rmspe_standardized: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub mean_rmspe: f64,
    pub mean_rmspe_standardized: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub per_method: Vec<MethodSummary>,
    pub splits: usize,
    pub test_size: usize,
    pub seed: u64,
    pub per_split: Vec<SplitDetail>,
}

impl BenchReport {
    pub fn summary(&self, method: BenchMethod) -> Option<&MethodSummary> {
        self.per_method.iter().find(|m| m.method == method)
    }

    /// Plain-text table: one row per method.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>10} {:>14} {:>8}\n",
            "method", "RMSPE", "RMSPE (std)", "splits"
        );
        for m in &self.per_method {
            out.push_str(&format!(
                "{:<10} {:>10.4} {:>14.4} {:>8}\n",
                m.method.to_string(),
                m.mean_rmspe,
                m.mean_rmspe_standardized,
                m.succeeded
            ));
        }
        out
    }
}

fn run_split(data: &Dataset<f64>, opts: &BenchOptions, method: BenchMethod, split: usize, split_seed: u64) -> SplitDetail {
    let mut detail = SplitDetail {
        split,
        seed: split_seed,
        method,
        theta: None,
        xi: None,
        rmspe: None,
        rmspe_standardized: None,
        error: None,
    };
    let outcome = (|| -> Result<(f64, Option<f64>, f64, f64)> {
        let plan = train_test_split(data.n(), opts.test_size, split_seed)?;
        let raw = data.raw_y();
        let mut train = data.subset(&plan.train_indices);
        train.y = raw.select(ndarray::Axis(0), &plan.train_indices);
        train.standardization = None;
        let test_x = data.x.select(ndarray::Axis(0), &plan.test_indices);
        let truth = raw.select(ndarray::Axis(0), &plan.test_indices);
        let tune_seed = derive_seed(split_seed, 1);
        let fit_seed = derive_seed(split_seed, 2);

        let (m, theta, xi) = match method {
            BenchMethod::Rvm | BenchMethod::Sprvm => {
                let m = if method == BenchMethod::Rvm { Method::Rvm } else { Method::Sprvm };
                let model = SamplerModel {
                    method: m,
                    settings: opts.settings.clone(),
                    budget: opts.cv_budget,
                };
                let grid = candidate_grid(m, &opts.theta_grid, &opts.xi_grid);
                let cv = cross_validate(&model, &grid, &train, opts.folds, tune_seed)?;
                (m, cv.best.theta, cv.best.xi)
            }
            BenchMethod::SprvmMl => {
                let std_train = standardize_response(&train)?;
                let x = if opts.settings.scale_covariates {
                    CovariateScaling::fit(&std_train.x).apply(&std_train.x)
                } else {
                    std_train.x.clone()
                };
                let (a, b) = opts.settings.sprvm_prior;
                let g = optimize_marglik(&opts.theta_grid, &opts.xi_grid, &x, std_train.y.view(), opts.settings.family, a, b)?;
                (Method::Sprvm, g.theta_hat, Some(g.xi_hat))
            }
        };
        let predictor = fit_predictor(m, &opts.settings, theta, xi, &train, opts.final_budget, fit_seed, 1)?;
        let pred: Array1<f64> = predictor.predict_batch(test_x.view())?.iter().map(|r| r.point).collect();
        let r = rmspe(pred.view(), truth.view())?;
        Ok((theta, xi, r, r / predictor.scale.sd))
    })();
    match outcome {
        Ok((theta, xi, r, rs)) => {
            detail.theta = Some(theta);
            detail.xi = xi;
            detail.rmspe = Some(r);
            detail.rmspe_standardized = Some(rs);
        }
        Err(e) => detail.error = Some(e.to_string()),
    }
    detail
}

/// For each random split: tune on the training part (cross validation, or
/// the marginal-likelihood grid for SPRVM-ML), refit with the final budget,
/// and score the held-out part. A method may lose fewer than 10% of its
/// splits (excluded with a warning); more is an error.
pub fn benchmark(data: &Dataset<f64>, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.test_size == 0 || opts.test_size >= data.n() {
        return Err(Error::invalid(format!(
            "test size must be in 1..{}, got {}",
            data.n(),
            opts.test_size
        )));
    }
    if opts.splits == 0 || opts.methods.is_empty() {
        return Err(Error::invalid("benchmark needs at least one split and one method"));
    }
    opts.cv_budget.validate()?;
    opts.final_budget.validate()?;

    let jobs: Vec<(usize, BenchMethod)> = (0..opts.splits)
        .flat_map(|s| opts.methods.iter().map(move |m| (s, *m)))
        .collect();
    let per_split: Vec<SplitDetail> = jobs
        .par_iter()
        .map(|&(s, m)| run_split(data, opts, m, s, derive_seed(opts.seed, s as u64)))
        .collect();

    let mut per_method = Vec::new();
    for &m in &opts.methods {
        let rows: Vec<&SplitDetail> = per_split.iter().filter(|d| d.method == m).collect();
        let ok: Vec<&SplitDetail> = rows.iter().copied().filter(|d| d.rmspe.is_some()).collect();
        let failed = rows.len() - ok.len();
        if failed > 0 {
            if (failed as f64) < 0.1 * rows.len() as f64 {
                for d in rows.iter().filter(|d| d.error.is_some()) {
                    log::warn!("{m} split {} failed and is excluded: {}", d.split, d.error.as_deref().unwrap_or(""));
                }
            } else {
                return Err(Error::TooManyFailures {
                    failed,
                    total: rows.len(),
                });
            }
        }
        let n = ok.len() as f64;
        per_method.push(MethodSummary {
            method: m,
            mean_rmspe: ok.iter().map(|d| d.rmspe.unwrap()).sum::<f64>() / n,
            mean_rmspe_standardized: ok.iter().map(|d| d.rmspe_standardized.unwrap()).sum::<f64>() / n,
            succeeded: ok.len(),
            failed,
        });
    }
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        per_method,
        splits: opts.splits,
        test_size: opts.test_size,
        seed: opts.seed,
        per_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use ndarray::array;
    use std::collections::HashSet;
    use std::sync::Mutex;

    #[test]
    fn rmspe_examples() {
        let t = array![1.0, 2.0];
        assert_eq!(rmspe(t.view(), t.view()).unwrap(), 0.0);
        let p = array![4.0, 6.0];
        assert!((rmspe(p.view(), t.view()).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(rmspe(array![3.0].view(), array![1.0].view()).unwrap(), 2.0);
        assert!(rmspe(array![1.0].view(), t.view()).is_err());
    }

    #[test]
    fn grids() {
        let g = default_theta_grid(KernelFamily::Gaussian);
        assert_eq!(g.len(), 13);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[12] - 1000.0).abs() < 1e-9);
        let x = default_xi_grid();
        assert!((x[0] - 0.01).abs() < 1e-15 && (x[12] - 1e4).abs() < 1e-8);
        assert_eq!(candidate_grid(Method::Sprvm, &[1.0, 2.0], &[3.0, 4.0, 5.0]).len(), 6);
        let c = candidate_grid(Method::Sprvm, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(c[1], Candidate { theta: 1.0, xi: Some(4.0) });
        assert!(candidate_grid(Method::Rvm, &[1.0, 2.0], &[3.0]).iter().all(|c| c.xi.is_none()));
    }

    /// Records every training response it is given and predicts a constant
    /// chosen by the candidate.
    struct Spy {
        seen: Mutex<Vec<(usize, Vec<f64>)>>,
        score: fn(&Candidate) -> f64,
    }

    impl FoldModel for Spy {
        fn method(&self) -> Method {
            Method::Sprvm
        }
        fn fit_predict(&self, train: &Dataset<f64>, test_x: &Array2<f64>, c: &Candidate, _seed: u64) -> Result<Array1<f64>> {
            self.seen.lock().unwrap().push((test_x.nrows(), train.y.to_vec()));
            if c.theta < 0.0 {
                return Err(Error::invalid("boom"));
            }
            Ok(Array1::from_elem(test_x.nrows(), (self.score)(c)))
        }
    }

    fn labelled(n: usize) -> Dataset<f64> {
        // Responses are distinct, and x encodes the row's response.
        let y = Array1::from_shape_fn(n, |i| i as f64 + 0.5);
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        Dataset::new(y, x).unwrap()
    }

    #[test]
    fn held_out_responses_never_seen() {
        let data = labelled(23);
        let spy = Spy {
            seen: Mutex::new(Vec::new()),
            score: |_| 0.0,
        };
        let grid = [Candidate { theta: 1.0, xi: Some(1.0) }];
        cross_validate(&spy, &grid, &data, 5, 3).unwrap();
        let plans = kfold_plan(23, 5, 3).unwrap();
        let seen = spy.seen.into_inner().unwrap();
        assert_eq!(seen.len(), 5);
        for (n_test, ys) in seen {
            let seen_set: HashSet<u64> = ys.iter().map(|v| v.to_bits()).collect();
            // Each fold's training set misses exactly the held-out rows of
            // some fold, and never includes any of them.
            let held: Vec<&crate::data::SplitPlan> = plans
                .iter()
                .filter(|p| p.test_indices.iter().all(|&i| !seen_set.contains(&data.y[i].to_bits())))
                .collect();
            assert_eq!(held.len(), 1);
            assert_eq!(held[0].test_indices.len(), n_test);
            assert_eq!(ys.len() + n_test, 23);
        }
    }

    #[test]
    fn single_candidate_and_ties() {
        let data = labelled(20);
        let spy = Spy {
            seen: Mutex::new(Vec::new()),
            score: |c| if c.theta == 3.0 { 100.0 } else { 10.0 },
        };
        let one = cross_validate(&spy, &[Candidate { theta: 3.0, xi: None }], &data, 4, 1).unwrap();
        assert_eq!(one.best.theta, 3.0);
        assert!(one.best_rmspe > 0.0);

        let grid = [
            Candidate { theta: 3.0, xi: None },
            Candidate { theta: 2.0, xi: None },
            Candidate { theta: 1.0, xi: None },
        ];
        let r = cross_validate(&spy, &grid, &data, 4, 1).unwrap();
        assert_eq!(r.best.theta, 2.0);
        assert_eq!(r.grid[1].cv_rmspe, r.grid[2].cv_rmspe);
    }

    #[test]
    fn failing_candidate_is_recorded_not_fatal() {
        let data = labelled(20);
        let spy = Spy {
            seen: Mutex::new(Vec::new()),
            score: |_| 10.0,
        };
        let grid = [Candidate { theta: -1.0, xi: None }, Candidate { theta: 1.0, xi: None }];
        let r = cross_validate(&spy, &grid, &data, 4, 1).unwrap();
        assert!(r.grid[0].failure.is_some() && r.grid[0].cv_rmspe.is_none());
        assert_eq!(r.best.theta, 1.0);
        let all_bad = [Candidate { theta: -1.0, xi: None }];
        assert!(cross_validate(&spy, &all_bad, &data, 4, 1).is_err());
    }

    #[test]
    fn cv_rmspe_is_fold_average() {
        let data = labelled(20);
        let spy = Spy {
            seen: Mutex::new(Vec::new()),
            score: |_| 7.0,
        };
        let r = cross_validate(&spy, &[Candidate { theta: 1.0, xi: None }], &data, 4, 9).unwrap();
        let s = &r.grid[0];
        assert_eq!(s.fold_rmspe.len(), 4);
        assert!((s.cv_rmspe.unwrap() - s.fold_rmspe.iter().sum::<f64>() / 4.0).abs() < 1e-15);
    }

    fn tiny_opts(methods: Vec<BenchMethod>) -> BenchOptions {
        BenchOptions {
            methods,
            splits: 2,
            test_size: 5,
            seed: 4,
            folds: 3,
            theta_grid: vec![0.5, 2.0],
            xi_grid: vec![10.0, 100.0],
            cv_budget: Budget {
                iterations: 200,
                burn_in: 100,
            },
            final_budget: Budget {
                iterations: 400,
                burn_in: 200,
            },
            settings: ModelSettings::new(KernelFamily::Gaussian),
        }
    }

    #[test]
    fn benchmark_bookkeeping_and_determinism() {
        let data = make_synthetic::<f64>(30, 2, 0.1, 2).unwrap();
        let opts = tiny_opts(vec![BenchMethod::Rvm, BenchMethod::Sprvm, BenchMethod::SprvmMl]);
        let a = benchmark(&data, &opts).unwrap();
        let b = benchmark(&data, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_split.len(), 6);
        for m in &a.per_method {
            let rows: Vec<f64> = a.per_split.iter().filter(|d| d.method == m.method).map(|d| d.rmspe.unwrap()).collect();
            assert_eq!(rows.len(), 2);
            assert!((m.mean_rmspe - rows.iter().sum::<f64>() / 2.0).abs() < 1e-15);
            assert!(m.mean_rmspe >= 0.0);
        }
        assert!(a.table().contains("SPRVM-ML"));
    }

    #[test]
    fn one_split_reports_that_split() {
        let data = make_synthetic::<f64>(25, 2, 0.1, 3).unwrap();
        let mut opts = tiny_opts(vec![BenchMethod::Sprvm]);
        opts.splits = 1;
        let r = benchmark(&data, &opts).unwrap();
        assert_eq!(r.per_method[0].mean_rmspe, r.per_split[0].rmspe.unwrap());
        opts.test_size = 25;
        assert!(benchmark(&data, &opts).is_err());
    }

    #[test]
    fn improper_prior_fails_every_split() {
        let data = make_synthetic::<f64>(25, 2, 0.1, 3).unwrap();
        let mut opts = tiny_opts(vec![BenchMethod::Sprvm]);
        opts.settings.sprvm_prior = (0.5, 0.0);
        assert!(matches!(benchmark(&data, &opts), Err(Error::TooManyFailures { failed: 2, total: 2 })));
    }

    #[test]
    fn method_names() {
        assert_eq!("sprvm-ml".parse::<BenchMethod>().unwrap(), BenchMethod::SprvmMl);
        assert_eq!(BenchMethod::SprvmMl.to_string(), "SPRVM-ML");
        assert_eq!(serde_json::to_string(&BenchMethod::Rvm).unwrap(), "\"RVM\"");
    }
}
