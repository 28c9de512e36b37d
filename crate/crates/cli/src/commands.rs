use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use sprvm::data::{load_csv, standardize_response, CovariateScaling, Dataset};
use sprvm::diagnostics::{psrf, CovEstimator, PsrfReport, PSRF_WARN};
use sprvm::kernels::build_design;
use sprvm::marglik::{optimize_marglik, CellStatus};
use sprvm::rvm::rvm_run_chains;
use sprvm::sprvm::{run_chains, ProprietyReport};
use sprvm::tune::{
    benchmark, candidate_grid, cross_validate, default_theta_grid, default_xi_grid, BenchOptions, Budget, ModelSettings,
    SamplerModel,
};
use sprvm::{KernelFamily, KernelSpec, Method, Predictor, RvmConfig, SprvmConfig};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, read_covariates, read_json, write_json, write_matrix_csv, write_string_csv, ManifestBuilder, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataInfo {
    pub path: String,
    pub response: String,
    pub n: usize,
    pub covariates: Vec<String>,
    pub scale_covariates: bool,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub schema_version: u32,
    pub method: Method,
    pub kernel: KernelSpec,
    pub data: DataInfo,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub sprvm_config: Option<SprvmConfig>,
    pub rvm_config: Option<RvmConfig>,
    pub propriety: Option<ProprietyReport>,
    /// Present when two or more chains were run.
    pub psrf: Option<PsrfReport>,
    pub posterior_mean_beta: Vec<f64>,
    pub predictor: Predictor,
    pub manifest: String,
}

struct FitOutcome {
    artifact: FitArtifact,
    /// Column labels and one matrix per chain.
    header: Vec<String>,
    chains: Vec<Array2<f64>>,
}

fn settings(data: &DataArgs, prior: &PriorArgs, estimator: EstimatorArg) -> ModelSettings {
    ModelSettings {
        family: data.kernel.into(),
        sprvm_prior: (prior.prior_a, prior.prior_b),
        rvm_prior: (prior.rvm_a, prior.rvm_b, prior.rvm_c, prior.rvm_d),
        scale_covariates: data.scale_covariates,
        estimator: estimator.into(),
    }
}

fn budget(iterations: usize, burn_in: usize) -> CliResult<Budget> {
    let b = Budget { iterations, burn_in };
    b.validate()?;
    Ok(b)
}

fn labels(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (0..count).map(move |i| format!("{prefix}{i}"))
}

fn run_fit(data: &DataArgs, run: &RunArgs, chains: usize) -> CliResult<FitOutcome> {
    if chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let theta = run.theta.ok_or_else(|| CliError::Usage("--theta is required".into()))?;
    let method: Method = run.method.into();
    let budget = budget(run.iters, run.burnin)?;
    let raw = load_csv::<f64>(&data.data, &data.response)?;
    let train = standardize_response(&raw)?;
    let scaling = data.scale_covariates.then(|| CovariateScaling::fit(&train.x));
    let x = scaling.as_ref().map_or_else(|| train.x.clone(), |s| s.apply(&train.x));
    let spec = KernelSpec::new(data.kernel.into(), theta)?;
    let k = build_design(&spec, &x)?;
    let dim = k.dim();
    let y = train.y.view();

    let (predictor, header, matrices, sprvm_config, rvm_config, propriety) = match method {
        Method::Sprvm => {
            let xi = run.xi.ok_or_else(|| CliError::Usage("--xi is required for the single-penalty model".into()))?;
            let cfg = SprvmConfig::new(xi, budget.draws())
                .with_prior(run.prior.prior_a, run.prior.prior_b)
                .with_burn_in(budget.burn_in)
                .with_seed(run.seed);
            let draws = run_chains(&cfg, &k, y, chains)?;
            let predictor = Predictor::from_sprvm(&draws, &x, train.scale(), run.estimator.into())?;
            let header: Vec<String> = std::iter::once("lambda".to_owned()).chain(labels("beta", dim)).collect();
            let matrices: Vec<Array2<f64>> = draws
                .iter()
                .map(|d| concatenate![Axis(1), d.lambda.view().insert_axis(Axis(1)), d.beta.view()])
                .collect();
            let propriety = draws[0].propriety.clone();
            (predictor, header, matrices, Some(cfg), None, Some(propriety))
        }
        Method::Rvm => {
            let p = &run.prior;
            let cfg = RvmConfig {
                a: p.rvm_a,
                b: p.rvm_b,
                c: p.rvm_c,
                d: p.rvm_d,
                ..RvmConfig::new(budget.draws()).with_burn_in(budget.burn_in).with_seed(run.seed)
            };
            let draws = rvm_run_chains(&cfg, &k, y, chains)?;
            let predictor = Predictor::from_rvm(&draws, &x, train.scale())?;
            let header: Vec<String> = std::iter::once("inv_sigma2".to_owned())
                .chain(labels("lambda", dim))
                .chain(labels("beta", dim))
                .collect();
            let matrices: Vec<Array2<f64>> = draws
                .iter()
                .map(|d| {
                    concatenate![
                        Axis(1),
                        d.inv_sigma2.view().insert_axis(Axis(1)),
                        d.lambdas.view(),
                        d.beta.view()
                    ]
                })
                .collect();
            (predictor, header, matrices, None, Some(cfg), None)
        }
    };
    let predictor = predictor.with_covariate_scaling(scaling);

    let psrf = if chains >= 2 {
        let views: Vec<_> = matrices.iter().map(|m| m.view()).collect();
        let report = psrf(&views, Some(&header))?;
        for f in report.flagged() {
            log::warn!("PSRF for {} is {:.4} (> {PSRF_WARN})", f.name, f.psrf);
        }
        Some(report)
    } else {
        None
    };

    let artifact = FitArtifact {
        schema_version: SCHEMA_VERSION,
        method,
        kernel: spec,
        data: DataInfo {
            path: data.data.display().to_string(),
            response: data.response.clone(),
            n: raw.n(),
            covariates: raw.names.clone().unwrap_or_default(),
            scale_covariates: data.scale_covariates,
        },
        chains,
        iterations: budget.iterations,
        burn_in: budget.burn_in,
        seed: run.seed,
        sprvm_config,
        rvm_config,
        propriety,
        psrf,
        posterior_mean_beta: predictor.beta_mean.to_vec(),
        predictor,
        manifest: "manifest.json".into(),
    };
    Ok(FitOutcome {
        artifact,
        header,
        chains: matrices,
    })
}

fn print_psrf(report: &PsrfReport) {
    println!(
        "PSRF over {} chains x {} draws (warning threshold {PSRF_WARN}, a tool default)",
        report.chains, report.draws_per_chain
    );
    println!("{:<14} {:>10}", "parameter", "psrf");
    for p in &report.per_parameter {
        let flag = if p.psrf > PSRF_WARN { "  WARN" } else { "" };
        println!("{:<14} {:>10.4}{flag}", p.name, p.psrf);
    }
    println!("max PSRF {:.4}", report.max_psrf);
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let manifest = ManifestBuilder::start("fit", &[&args.data.data])?;
    let outcome = run_fit(&args.data, &args.run, args.chains)?;
    ensure_dir(&args.out)?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    for (c, m) in outcome.chains.iter().enumerate() {
        let path = args.out.join(format!("draws_chain{c}.csv"));
        write_matrix_csv(&path, &outcome.header, m)?;
        outputs.push(path);
    }
    let fit_path = args.out.join("fit.json");
    write_json(&fit_path, &outcome.artifact)?;
    outputs.push(fit_path);
    if let Some(report) = &outcome.artifact.psrf {
        print_psrf(report);
    }
    let a = &outcome.artifact;
    let config = serde_json::json!({
        "method": a.method,
        "kernel": a.kernel,
        "data": a.data,
        "chains": a.chains,
        "iterations": a.iterations,
        "burn_in": a.burn_in,
        "sprvm_config": a.sprvm_config,
        "rvm_config": a.rvm_config,
        "estimator": CovEstimator::from(args.run.estimator),
    });
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    manifest.finish(
        &args.out.join("manifest.json"),
        config,
        vec![args.run.seed],
        &out_refs,
        a.propriety.clone(),
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn covariates_for(artifact: &FitArtifact, path: &Path) -> CliResult<Array2<f64>> {
    let names = (!artifact.data.covariates.is_empty()).then_some(artifact.data.covariates.as_slice());
    read_covariates(path, names, artifact.predictor.x_train.ncols())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let manifest = ManifestBuilder::start("predict", &[&args.model, &args.input])?;
    let artifact: FitArtifact = read_json(&args.model)?;
    let x = covariates_for(&artifact, &args.input)?;
    let preds = artifact.predictor.predict_batch(x.view())?;
    let rows: Vec<Vec<String>> = preds
        .iter()
        .map(|p| vec![p.point.to_string(), fmt_opt(p.mcse())])
        .collect();
    write_string_csv(&args.output, &["prediction", "mcse"], &rows)?;
    let mut manifest_path = args.output.clone().into_os_string();
    manifest_path.push(".manifest.json");
    manifest.finish(
        Path::new(&manifest_path),
        serde_json::json!({ "model": args.model, "input": args.input }),
        vec![artifact.seed],
        &[&args.output],
        None,
    )
}

fn grids(grid: &GridArgs, family: KernelFamily) -> (Vec<f64>, Vec<f64>) {
    (
        grid.theta_grid.clone().unwrap_or_else(|| default_theta_grid(family)),
        grid.xi_grid.clone().unwrap_or_else(default_xi_grid),
    )
}

pub fn cv(args: &CvArgs) -> CliResult<()> {
    let manifest = ManifestBuilder::start("cv", &[&args.data.data])?;
    let raw = load_csv::<f64>(&args.data.data, &args.data.response)?;
    let settings = settings(&args.data, &args.prior, args.estimator);
    let (thetas, xis) = grids(&args.grid, settings.family);
    let method: Method = args.method.into();
    let model = SamplerModel {
        method,
        settings: settings.clone(),
        budget: budget(args.iters, args.burnin)?,
    };
    let grid = candidate_grid(method, &thetas, &xis);
    let result = cross_validate(&model, &grid, &raw, args.k, args.seed)?;
    ensure_dir(&args.out)?;
    let path = args.out.join("cv.json");
    write_json(&path, &result)?;
    println!(
        "best {} with CV RMSPE {:.6}",
        result.best,
        result.best_rmspe
    );
    manifest.finish(
        &args.out.join("manifest.json"),
        serde_json::json!({
            "method": method,
            "settings": settings,
            "theta_grid": thetas,
            "xi_grid": xis,
            "k": args.k,
            "budget": model.budget,
        }),
        vec![args.seed],
        &[&path],
        None,
    )
}

#[derive(Debug, Serialize)]
struct ArgmaxRecord {
    schema_version: u32,
    family: KernelFamily,
    prior_a: f64,
    prior_b: f64,
    theta_hat: f64,
    xi_hat: f64,
    best_log_ml: f64,
    cells: usize,
    divergent_cells: usize,
    failed_cells: usize,
}

pub fn ml_opt(args: &MlOptArgs) -> CliResult<()> {
    let manifest = ManifestBuilder::start("ml-opt", &[&args.data.data])?;
    let raw = load_csv::<f64>(&args.data.data, &args.data.response)?;
    let d: Dataset<f64> = standardize_response(&raw)?;
    let family: KernelFamily = args.data.kernel.into();
    let x = if args.data.scale_covariates {
        CovariateScaling::fit(&d.x).apply(&d.x)
    } else {
        d.x.clone()
    };
    let (thetas, xis) = grids(&args.grid, family);
    let grid = optimize_marglik(&thetas, &xis, &x, d.y.view(), family, args.prior_a, args.prior_b)?;

    ensure_dir(&args.out)?;
    let csv_path = args.out.join("marglik_grid.csv");
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            let v = match &c.status {
                CellStatus::Finite { log_ml } => log_ml.to_string(),
                CellStatus::Divergent => "DIVERGENT".to_owned(),
                CellStatus::Failed { .. } => "FAILED".to_owned(),
            };
            vec![c.theta.to_string(), c.xi.to_string(), v]
        })
        .collect();
    write_string_csv(&csv_path, &["theta", "xi", "log_ml"], &rows)?;
    for c in &grid.cells {
        if let CellStatus::Failed { reason } = &c.status {
            log::warn!("cell theta={} xi={} failed: {reason}", c.theta, c.xi);
        }
    }
    let failed = grid.cells.iter().filter(|c| matches!(c.status, CellStatus::Failed { .. })).count();
    let record = ArgmaxRecord {
        schema_version: SCHEMA_VERSION,
        family,
        prior_a: args.prior_a,
        prior_b: args.prior_b,
        theta_hat: grid.theta_hat,
        xi_hat: grid.xi_hat,
        best_log_ml: grid.best_log_ml,
        cells: grid.cells.len(),
        divergent_cells: grid.divergent_cells().count(),
        failed_cells: failed,
    };
    let json_path = args.out.join("marglik_argmax.json");
    write_json(&json_path, &record)?;
    println!(
        "theta_hat {} xi_hat {} log marginal likelihood {:.6}",
        grid.theta_hat, grid.xi_hat, grid.best_log_ml
    );
    manifest.finish(
        &args.out.join("manifest.json"),
        serde_json::json!({
            "family": family,
            "prior": [args.prior_a, args.prior_b],
            "theta_grid": thetas,
            "xi_grid": xis,
            "scale_covariates": args.data.scale_covariates,
        }),
        vec![],
        &[&csv_path, &json_path],
        None,
    )
}

#[derive(Debug, Serialize)]
struct PointReport {
    row: usize,
    prediction: f64,
    mcse: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    schema_version: u32,
    method: Method,
    psrf_warn_threshold: f64,
    psrf: Option<PsrfReport>,
    predictions: Vec<PointReport>,
}

pub const MCSE_UNAVAILABLE: &str = "MCSE unavailable (no known convergence rate)";

pub fn diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let artifact = match (&args.fit, &args.data) {
        (Some(path), _) => read_json::<FitArtifact>(path)?,
        (None, Some(data)) => {
            let data = DataArgs {
                data: data.clone(),
                response: args.response.clone(),
                kernel: args.kernel,
                scale_covariates: args.scale_covariates,
            };
            run_fit(&data, &args.run, args.chains)?.artifact
        }
        (None, None) => return Err(CliError::Usage("pass --fit FILE or --data FILE".into())),
    };
    match &artifact.psrf {
        Some(r) => print_psrf(r),
        None => println!("PSRF unavailable: the fit used a single chain"),
    }
    let mut predictions = Vec::new();
    if let Some(path) = &args.new_point {
        let x = covariates_for(&artifact, path)?;
        for (i, p) in artifact.predictor.predict_batch(x.view())?.into_iter().enumerate() {
            match p.mcse() {
                Some(m) => println!("row {}: prediction {} MCSE {}", i + 1, p.point, m),
                None => println!("row {}: prediction {} {MCSE_UNAVAILABLE}", i + 1, p.point),
            }
            predictions.push(PointReport {
                row: i + 1,
                prediction: p.point,
                mcse: p.mcse(),
            });
        }
    }
    if let Some(path) = &args.json {
        write_json(
            path,
            &DiagnoseReport {
                schema_version: SCHEMA_VERSION,
                method: artifact.method,
                psrf_warn_threshold: PSRF_WARN,
                psrf: artifact.psrf.clone(),
                predictions,
            },
        )?;
    }
    Ok(())
}

pub fn bench(args: &BenchArgs) -> CliResult<()> {
    let manifest = ManifestBuilder::start("bench", &[&args.data.data])?;
    let raw = load_csv::<f64>(&args.data.data, &args.data.response)?;
    let settings = settings(&args.data, &args.prior, args.estimator);
    let (thetas, xis) = grids(&args.grid, settings.family);
    let opts = BenchOptions {
        methods: args.methods.clone(),
        splits: args.splits,
        test_size: args.test_size,
        seed: args.seed,
        folds: args.folds,
        theta_grid: thetas,
        xi_grid: xis,
        cv_budget: budget(args.cv_iters, args.cv_burnin)?,
        final_budget: budget(args.iters, args.burnin)?,
        settings,
    };
    let report = benchmark(&raw, &opts)?;
    ensure_dir(&args.out)?;
    let json_path = args.out.join("bench.json");
    let table_path = args.out.join("bench.txt");
    write_json(&json_path, &report)?;
    let table = report.table();
    std::fs::write(&table_path, &table).map_err(|e| crate::io::io_err(&table_path, e))?;
    print!("{table}");
    manifest.finish(&args.out.join("manifest.json"), &opts, vec![args.seed], &[&json_path, &table_path], None)
}
