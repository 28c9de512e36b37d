//! Single-penalty relevance vector machine.
//!
//! ```text
//! y | beta        ~ N(K beta, xi^{-1} I)
//! beta | lambda   ~ N(0, lambda^{-1} I)
//! pi(lambda)      ∝ lambda^(a-1) exp(-b lambda)
//! ```
//!
//! `xi` is fixed (tuned externally). The two-block Gibbs sampler alternates
//!
//! ```text
//! beta | lambda ~ N((K'K + lambda/xi I)^{-1} K'y, (xi K'K + lambda I)^{-1})
//! lambda | beta ~ Gamma((n+1)/2 + a, beta'beta/2 + b)      (shape, rate)
//! ```
//!
//! drawing `beta` first from the current `lambda` in every scan.

pub mod drift;
pub mod propriety;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DesignMatrix, KernelSpec};
use crate::linalg::{self, Cholesky};
use crate::mvn;
use crate::real::Real;
use crate::rng::{self, SamplerRng};

pub use drift::{drift_check, drift_function, DriftReport};
pub use propriety::{check_propriety, GammaRatioCondition, Necessary, ProprietyReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprvmConfig {
    /// Prior shape offset for lambda.
    pub a: f64,
    /// Prior rate for lambda.
    pub b: f64,
    /// Noise precision (fixed).
    pub xi: f64,
    /// Retained draws.
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init_lambda: f64,
}

impl SprvmConfig {
    /// Improper `pi(lambda) ∝ lambda^-2` prior, unit starting penalty, and a
    /// burn-in as long as the retained run.
    pub fn new(xi: f64, draws: usize) -> Self {
        SprvmConfig {
            a: -1.0,
            b: 0.0,
            xi,
            draws,
            burn_in: draws,
            seed: 0,
            init_lambda: 1.0,
        }
    }

    pub fn with_prior(mut self, a: f64, b: f64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws < 1 {
            return Err(Error::invalid("at least one retained draw is required"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid(format!("xi must be positive, got {}", self.xi)));
        }
        if !(self.init_lambda > 0.0 && self.init_lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "initial lambda must be positive, got {}",
                self.init_lambda
            )));
        }
        if !self.a.is_finite() || !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::invalid(format!(
                "prior (a, b) must be finite with b >= 0, got ({}, {})",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SprvmDraws<T> {
    /// `draws x (n+1)`.
    pub beta: Array2<T>,
    pub lambda: Array1<T>,
    pub config: SprvmConfig,
    pub kernel: KernelSpec,
    pub propriety: ProprietyReport,
}

impl<T: Real> SprvmDraws<T> {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Cached `K'K` and `K'y` for repeated draws from `beta | lambda`.
#[derive(Debug, Clone)]
pub struct BetaConditional<T> {
    ktk: Array2<T>,
    kty: Array1<T>,
}

impl<T: Real> BetaConditional<T> {
    pub fn new(k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<Self> {
        if y.len() != k.n() {
            return Err(Error::DimensionMismatch {
                expected: k.n(),
                found: y.len(),
            });
        }
        Ok(BetaConditional {
            ktk: linalg::gram(k.view()),
            kty: k.view().t().dot(&y),
        })
    }

    pub fn dim(&self) -> usize {
        self.kty.len()
    }

    /// `xi K'K + lambda I`.
    pub fn precision(&self, lambda: T, xi: T) -> Array2<T> {
        let mut q = &self.ktk * xi;
        for i in 0..q.nrows() {
            q[[i, i]] += lambda;
        }
        q
    }

    fn factor(&self, lambda: T, xi: T) -> Result<Cholesky<T>> {
        if !(lambda > T::zero() && xi > T::zero()) || !lambda.is_finite() || !xi.is_finite() {
            return Err(Error::invalid(format!(
                "lambda and xi must be positive and finite, got {lambda}, {xi}"
            )));
        }
        Cholesky::with_jitter(self.precision(lambda, xi).view()).map_err(|condition| Error::Factorization {
            lambda: lambda.as_f64(),
            xi: xi.as_f64(),
            condition,
        })
    }

    /// Conditional mean and covariance in closed form.
    pub fn moments(&self, lambda: T, xi: T) -> Result<(Array1<T>, Array2<T>)> {
        let chol = self.factor(lambda, xi)?;
        let h = &self.kty * xi;
        Ok(mvn::canonical_moments(&chol, h.view()))
    }

    pub fn mean(&self, lambda: T, xi: T) -> Result<Array1<T>> {
        let chol = self.factor(lambda, xi)?;
        Ok(chol.solve((&self.kty * xi).view()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, lambda: T, xi: T, rng: &mut R) -> Result<Array1<T>> {
        let chol = self.factor(lambda, xi)?;
        let h = &self.kty * xi;
        Ok(mvn::sample_canonical(&chol, h.view(), rng))
    }
}

pub fn sample_beta_given_lambda<T: Real, R: Rng + ?Sized>(
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    lambda: T,
    xi: T,
    rng: &mut R,
) -> Result<Array1<T>> {
    BetaConditional::new(k, y)?.sample(lambda, xi, rng)
}

/// `lambda | beta ~ Gamma(len(beta)/2 + a, beta'beta/2 + b)`.
pub fn sample_lambda_given_beta<T: Real, R: Rng + ?Sized>(beta: ArrayView1<T>, a: T, b: T, rng: &mut R) -> Result<T> {
    let half = T::lit(0.5);
    let shape = T::from_usize(beta.len()).unwrap() * half + a;
    let rate = beta.dot(&beta) * half + b;
    let bad = || Error::InvalidGamma {
        shape: shape.as_f64(),
        rate: rate.as_f64(),
    };
    let draw = T::sample_gamma(shape, rate, rng).ok_or_else(bad)?;
    if draw > T::zero() && draw.is_finite() {
        Ok(draw)
    } else {
        Err(bad())
    }
}

/// Runs one chain with the random stream `(config.seed, 0)`.
pub fn run_gibbs<T: Real>(config: &SprvmConfig, k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<SprvmDraws<T>> {
    let mut rng = rng::stream(config.seed, 0);
    run_gibbs_with_rng(config, k, y, &mut rng)
}

/// Runs one chain on a caller-supplied stream. Refuses priors that are
/// proven improper and logs a warning when the sufficient conditions fail.
pub fn run_gibbs_with_rng<T: Real>(
    config: &SprvmConfig,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    rng: &mut SamplerRng,
) -> Result<SprvmDraws<T>> {
    config.validate()?;
    let propriety = check_propriety(config.a, config.b, k.n(), k);
    if propriety.proven_improper() {
        return Err(Error::ImproperPosterior(propriety.notes.join("; ")));
    }
    if !propriety.sufficient_ok {
        log::warn!(
            "sufficient conditions for geometric ergodicity fail ({}); sampling anyway",
            propriety.notes.join("; ")
        );
    }

    let cond = BetaConditional::new(k, y)?;
    let xi = T::lit(config.xi);
    let (a, b) = (T::lit(config.a), T::lit(config.b));
    let mut beta_out = Array2::<T>::zeros((config.draws, cond.dim()));
    let mut lambda_out = Array1::<T>::zeros(config.draws);
    let mut lambda = T::lit(config.init_lambda);
    for it in 0..config.burn_in + config.draws {
        let beta = cond.sample(lambda, xi, rng)?;
        lambda = sample_lambda_given_beta(beta.view(), a, b, rng)?;
        if it >= config.burn_in {
            let row = it - config.burn_in;
            beta_out.row_mut(row).assign(&beta);
            lambda_out[row] = lambda;
        }
    }
    Ok(SprvmDraws {
        beta: beta_out,
        lambda: lambda_out,
        config: *config,
        kernel: *k.spec(),
        propriety,
    })
}

/// Starting penalties for `chains` over-dispersed chains: log-spaced from
/// `init / 100` to `init * 100`.
pub fn dispersed_starts(init: f64, chains: usize) -> Vec<f64> {
    if chains <= 1 {
        return vec![init];
    }
    (0..chains)
        .map(|c| init * 10f64.powf(-2.0 + 4.0 * c as f64 / (chains - 1) as f64))
        .collect()
}

/// Independent chains in parallel; chain `c` uses stream `(seed, c)` and the
/// `c`-th over-dispersed start. Output order is chain order.
pub fn run_chains<T: Real>(
    config: &SprvmConfig,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    chains: usize,
) -> Result<Vec<SprvmDraws<T>>> {
    let starts = dispersed_starts(config.init_lambda, chains);
    starts
        .into_par_iter()
        .enumerate()
        .map(|(c, init)| {
            let cfg = SprvmConfig {
                init_lambda: init,
                ..*config
            };
            let mut rng = rng::stream(config.seed, c as u64);
            run_gibbs_with_rng(&cfg, k, y, &mut rng)
        })
        .collect()
}
