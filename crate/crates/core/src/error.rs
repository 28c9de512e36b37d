use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("response column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("response has zero variance")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel value at ({i}, {j}) is not finite")]
    NonFiniteKernel { i: usize, j: usize },

    #[error(
        "precision matrix is not positive definite after jitter escalation \
         (lambda = {lambda:e}, xi = {xi:e}, condition estimate = {condition:e})"
    )]
    Factorization { lambda: f64, xi: f64, condition: f64 },

    #[error("invalid gamma conditional: shape = {shape}, rate = {rate}")]
    InvalidGamma { shape: f64, rate: f64 },

    #[error("posterior is improper: {0}")]
    ImproperPosterior(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("all marginal likelihood grid cells diverge; use a prior with b > 0 or a in (-n/2, 0)")]
    AllDivergent,

    #[error("within-chain variance is zero for parameter {0}")]
    ZeroWithinVariance(usize),

    #[error("quadratic form is significantly negative ({0:e}); covariance estimate is broken")]
    NegativeQuadraticForm(f64),

    #[error("{failed} of {total} benchmark splits failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
