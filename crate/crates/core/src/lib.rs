//! Kernel regression with a single shared penalty (and the multi-penalty
//! relevance vector machine as a baseline): Gibbs samplers, posterior
//! propriety checks, marginal likelihood, Monte Carlo standard errors,
//! convergence diagnostics and cross-validated tuning.
//!
//! Numerical code is generic over [`real::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod marglik;
pub mod mvn;
pub mod predict;
pub mod real;
pub mod rng;
pub mod rvm;
pub mod sprvm;
pub mod tune;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use predict::{Method, PredictionResult, Predictor};
pub use real::Real;
pub use rvm::RvmConfig;
pub use sprvm::SprvmConfig;

pub type Dataset = data::Dataset<f64>;
pub type DesignMatrix = kernels::DesignMatrix<f64>;
pub type SprvmDraws = sprvm::SprvmDraws<f64>;
pub type RvmDraws = rvm::RvmDraws<f64>;
pub type Cholesky = linalg::Cholesky<f64>;

pub type Dataset32 = data::Dataset<f32>;
pub type DesignMatrix32 = kernels::DesignMatrix<f32>;
pub type SprvmDraws32 = sprvm::SprvmDraws<f32>;
pub type RvmDraws32 = rvm::RvmDraws<f32>;
