use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sprvm::diagnostics::CovEstimator;
use sprvm::tune::BenchMethod;
use sprvm::{KernelFamily, Method};

#[derive(Debug, Parser)]
#[command(name = "sprvm", version, about = "Single-penalty relevance vector machine: fitting, tuning, diagnostics")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, env = "SPRVM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Gibbs sampler and write draws, the fitted model and a manifest.
    Fit(FitArgs),
    /// Predict at new covariates from a saved fit.
    Predict(PredictArgs),
    /// K-fold cross-validation over a (theta, xi) grid.
    Cv(CvArgs),
    /// Marginal-likelihood grid search for (theta, xi).
    MlOpt(MlOptArgs),
    /// PSRF table and prediction MCSE, from a saved fit or a fresh multi-chain run.
    Diagnose(DiagnoseArgs),
    /// Repeated random-split benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Sprvm,
    Rvm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sprvm => Method::Sprvm,
            MethodArg::Rvm => Method::Rvm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Laplace,
    Poly,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelFamily::Gaussian,
            KernelArg::Laplace => KernelFamily::Laplace,
            KernelArg::Poly => KernelFamily::Polynomial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    BatchMeans,
    SpectralVariance,
}

impl From<EstimatorArg> for CovEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::BatchMeans => CovEstimator::BatchMeans,
            EstimatorArg::SpectralVariance => CovEstimator::SpectralVariance,
        }
    }
}

fn parse_bench_method(s: &str) -> Result<BenchMethod, String> {
    s.parse().map_err(|e: sprvm::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// Standardize covariate columns using training rows.
    #[arg(long)]
    pub scale_covariates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Single-penalty prior: pi(lambda) ∝ lambda^(a-1) exp(-b lambda).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub prior_b: f64,
    /// Multi-penalty model: Gamma(a, b) on each penalty, Gamma(c, d) on the noise precision.
    #[arg(long, default_value_t = 0.001, allow_negative_numbers = true)]
    pub rvm_a: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub rvm_b: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rvm_c: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rvm_d: f64,
}

/// Sampler settings shared by `fit` and a fresh `diagnose` run.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "sprvm")]
    pub method: MethodArg,
    /// Kernel bandwidth, or the degree for the polynomial kernel.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Noise precision (single-penalty model only).
    #[arg(long)]
    pub xi: Option<f64>,
    /// Total scans, burn-in included.
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "batch-means")]
    pub estimator: EstimatorArg,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Output directory.
    #[arg(long, default_value = "sprvm-fit")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// `fit.json` written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of new covariates.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Comma-separated theta values; defaults depend on the kernel.
    #[arg(long, value_delimiter = ',')]
    pub theta_grid: Option<Vec<f64>>,
    /// Comma-separated xi values.
    #[arg(long, value_delimiter = ',')]
    pub xi_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "sprvm")]
    pub method: MethodArg,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 2_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "batch-means")]
    pub estimator: EstimatorArg,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value = "sprvm-cv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MlOptArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub prior_b: f64,
    #[arg(long, default_value = "sprvm-ml")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Saved fit; when absent, a fresh run is made from --data.
    #[arg(long, conflicts_with = "data")]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long)]
    pub scale_covariates: bool,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// CSV of covariate rows to predict at.
    #[arg(long)]
    pub new_point: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_bench_method, default_value = "rvm,sprvm,sprvm-ml")]
    pub methods: Vec<BenchMethod>,
    #[arg(long, default_value_t = 20)]
    pub splits: usize,
    #[arg(long, default_value_t = 10)]
    pub test_size: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 2_000)]
    pub cv_iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub cv_burnin: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "batch-means")]
    pub estimator: EstimatorArg,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value = "sprvm-bench")]
    pub out: PathBuf,
}
