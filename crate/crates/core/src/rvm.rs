//! Multi-penalty relevance vector machine, used as the baseline.
//!
//! ```text
//! y | beta, sigma2   ~ N(K beta, sigma2 I)
//! beta_i | lambda_i  ~ N(0, 1/lambda_i)
//! lambda_i           ~ Gamma(a, b)
//! 1/sigma2           ~ Gamma(c, d)      (c = d = 0: pi(1/sigma2) ∝ sigma2)
//! ```
//!
//! Fixed scan: given `beta`, draw `1/sigma2` and every `lambda_i`, then
//! draw `beta`. No Markov chain CLT is known for this sampler, so nothing
//! downstream attaches a Monte Carlo standard error to its output.

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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvmConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// One value per coefficient, or a single value broadcast to all.
    pub init_lambda: Vec<f64>,
    pub init_inv_sigma2: f64,
}

impl RvmConfig {
    /// `Gamma(0.001, 0.01)` penalties (mean 0.1, variance 10) and the
    /// improper `c = d = 0` noise prior.
    pub fn new(draws: usize) -> Self {
        RvmConfig {
            a: 0.001,
            b: 0.01,
            c: 0.0,
            d: 0.0,
            draws,
            burn_in: draws,
            seed: 0,
            init_lambda: vec![1.0],
            init_inv_sigma2: 1.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.draws < 1 {
            return Err(Error::invalid("at least one retained draw is required"));
        }
        if self.init_lambda.len() != 1 && self.init_lambda.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.init_lambda.len(),
            });
        }
        if self.init_lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("initial penalties must be positive and finite"));
        }
        if !(self.init_inv_sigma2 > 0.0 && self.init_inv_sigma2.is_finite()) {
            return Err(Error::invalid("initial noise precision must be positive and finite"));
        }
        if [self.a, self.b, self.c, self.d].iter().any(|v| !v.is_finite()) || self.b < 0.0 || self.d < 0.0 {
            return Err(Error::invalid("hyperparameters must be finite with b, d >= 0"));
        }
        Ok(())
    }

    fn initial_lambdas<T: Real>(&self, dim: usize) -> Array1<T> {
        if self.init_lambda.len() == 1 {
            Array1::from_elem(dim, T::lit(self.init_lambda[0]))
        } else {
            self.init_lambda.iter().map(|l| T::lit(*l)).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RvmDraws<T> {
    /// `draws x (n+1)`.
    pub beta: Array2<T>,
    /// `draws x (n+1)`.
    pub lambdas: Array2<T>,
    pub inv_sigma2: Array1<T>,
    pub config: RvmConfig,
    pub kernel: KernelSpec,
}

impl<T: Real> RvmDraws<T> {
    pub fn len(&self) -> usize {
        self.inv_sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_sigma2.is_empty()
    }
}

/// Cached `K'K` and `K'y`.
#[derive(Debug, Clone)]
pub struct RvmBetaConditional<T> {
    ktk: Array2<T>,
    kty: Array1<T>,
}

impl<T: Real> RvmBetaConditional<T> {
    pub fn new(k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<Self> {
        if y.len() != k.n() {
            return Err(Error::DimensionMismatch {
                expected: k.n(),
                found: y.len(),
            });
        }
        Ok(RvmBetaConditional {
            ktk: linalg::gram(k.view()),
            kty: k.view().t().dot(&y),
        })
    }

    pub fn dim(&self) -> usize {
        self.kty.len()
    }

    fn factor(&self, lambdas: ArrayView1<T>, inv_sigma2: T) -> Result<Cholesky<T>> {
        if lambdas.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: lambdas.len(),
            });
        }
        if lambdas.iter().any(|l| !(*l > T::zero() && l.is_finite())) || !(inv_sigma2 > T::zero() && inv_sigma2.is_finite())
        {
            return Err(Error::invalid("penalties and noise precision must be positive and finite"));
        }
        // K'K / sigma2 + D
        let mut q = &self.ktk * inv_sigma2;
        for i in 0..q.nrows() {
            q[[i, i]] += lambdas[i];
        }
        Cholesky::with_jitter(q.view()).map_err(|condition| Error::Factorization {
            lambda: lambdas.iter().fold(f64::INFINITY, |m, l| m.min(l.as_f64())),
            xi: inv_sigma2.as_f64(),
            condition,
        })
    }

    pub fn moments(&self, lambdas: ArrayView1<T>, inv_sigma2: T) -> Result<(Array1<T>, Array2<T>)> {
        let chol = self.factor(lambdas, inv_sigma2)?;
        Ok(mvn::canonical_moments(&chol, (&self.kty * inv_sigma2).view()))
    }

    pub fn mean(&self, lambdas: ArrayView1<T>, inv_sigma2: T) -> Result<Array1<T>> {
        let chol = self.factor(lambdas, inv_sigma2)?;
        Ok(chol.solve((&self.kty * inv_sigma2).view()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, lambdas: ArrayView1<T>, inv_sigma2: T, rng: &mut R) -> Result<Array1<T>> {
        let chol = self.factor(lambdas, inv_sigma2)?;
        Ok(mvn::sample_canonical(&chol, (&self.kty * inv_sigma2).view(), rng))
    }
}

/// `beta | . ~ N((K'K + D sigma2)^{-1} K'y, (K'K/sigma2 + D)^{-1})`.
pub fn rvm_sample_beta<T: Real, R: Rng + ?Sized>(
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    lambdas: ArrayView1<T>,
    inv_sigma2: T,
    rng: &mut R,
) -> Result<Array1<T>> {
    RvmBetaConditional::new(k, y)?.sample(lambdas, inv_sigma2, rng)
}

fn gamma_draw<T: Real, R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R) -> Result<T> {
    let bad = || Error::InvalidGamma {
        shape: shape.as_f64(),
        rate: rate.as_f64(),
    };
    match T::sample_gamma(shape, rate, rng) {
        Some(v) if v > T::zero() && v.is_finite() => Ok(v),
        _ => Err(bad()),
    }
}

/// `1/sigma2 | . ~ Gamma(n/2 + c, ||y - K beta||^2 / 2 + d)`.
pub fn rvm_sample_inv_sigma2<T: Real, R: Rng + ?Sized>(
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    beta: ArrayView1<T>,
    c: T,
    d: T,
    rng: &mut R,
) -> Result<T> {
    let resid = &y - &k.view().dot(&beta);
    sample_inv_sigma2_from_rss(resid.dot(&resid), y.len(), c, d, rng)
}

fn sample_inv_sigma2_from_rss<T: Real, R: Rng + ?Sized>(rss: T, n: usize, c: T, d: T, rng: &mut R) -> Result<T> {
    let half = T::lit(0.5);
    gamma_draw(T::from_usize(n).unwrap() * half + c, rss * half + d, rng)
}

/// `lambda_i | . ~ Gamma(a + 1/2, beta_i^2 / 2 + b)`.
pub fn rvm_sample_lambda_i<T: Real, R: Rng + ?Sized>(beta_i: T, a: T, b: T, rng: &mut R) -> Result<T> {
    let half = T::lit(0.5);
    gamma_draw(a + half, beta_i * beta_i * half + b, rng)
}

pub fn rvm_run_gibbs<T: Real>(config: &RvmConfig, k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<RvmDraws<T>> {
    let mut rng = rng::stream(config.seed, 0);
    rvm_run_gibbs_with_rng(config, k, y, &mut rng)
}

pub fn rvm_run_gibbs_with_rng<T: Real>(
    config: &RvmConfig,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    rng: &mut SamplerRng,
) -> Result<RvmDraws<T>> {
    let dim = k.dim();
    config.validate(dim)?;
    let cond = RvmBetaConditional::new(k, y)?;
    let (a, b, c, d) = (T::lit(config.a), T::lit(config.b), T::lit(config.c), T::lit(config.d));

    let mut lambdas = config.initial_lambdas::<T>(dim);
    let mut tau = T::lit(config.init_inv_sigma2);
    let mut beta = cond.sample(lambdas.view(), tau, rng)?;

    let mut beta_out = Array2::<T>::zeros((config.draws, dim));
    let mut lambda_out = Array2::<T>::zeros((config.draws, dim));
    let mut tau_out = Array1::<T>::zeros(config.draws);
    for it in 0..config.burn_in + config.draws {
        tau = rvm_sample_inv_sigma2(k, y, beta.view(), c, d, rng)?;
        for i in 0..dim {
            lambdas[i] = rvm_sample_lambda_i(beta[i], a, b, rng)?;
        }
        beta = cond.sample(lambdas.view(), tau, rng)?;
        if it >= config.burn_in {
            let row = it - config.burn_in;
            beta_out.row_mut(row).assign(&beta);
            lambda_out.row_mut(row).assign(&lambdas);
            tau_out[row] = tau;
        }
    }
    Ok(RvmDraws {
        beta: beta_out,
        lambdas: lambda_out,
        inv_sigma2: tau_out,
        config: config.clone(),
        kernel: *k.spec(),
    })
}

/// Independent chains in parallel; chain `c` uses stream `(seed, c)` and
/// starting penalties scaled over `[1/100, 100]` like the single-penalty
/// sampler.
pub fn rvm_run_chains<T: Real>(
    config: &RvmConfig,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    chains: usize,
) -> Result<Vec<RvmDraws<T>>> {
    let scales = crate::sprvm::dispersed_starts(1.0, chains);
    scales
        .into_par_iter()
        .enumerate()
        .map(|(ci, scale)| {
            let cfg = RvmConfig {
                init_lambda: config.init_lambda.iter().map(|l| l * scale).collect(),
                ..config.clone()
            };
            let mut rng = rng::stream(config.seed, ci as u64);
            rvm_run_gibbs_with_rng(&cfg, k, y, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, standardize_response};
    use crate::kernels::build_design;
    use crate::sprvm::BetaConditional;
    use ndarray::array;

    fn problem(n: usize, seed: u64) -> (DesignMatrix<f64>, Array1<f64>) {
        let d = standardize_response(&make_synthetic::<f64>(n, 2, 0.1, seed).unwrap()).unwrap();
        (build_design(&KernelSpec::gaussian(1.5).unwrap(), &d.x).unwrap(), d.y)
    }

    #[test]
    fn defaults() {
        let c = RvmConfig::new(10);
        assert_eq!((c.a, c.b, c.c, c.d), (0.001, 0.01, 0.0, 0.0));
        // Gamma(0.001, 0.01) prior: mean 0.1, variance 10.
        assert!((c.a / c.b - 0.1).abs() < 1e-15);
        assert!((c.a / (c.b * c.b) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn equal_penalties_match_single_penalty_mean() {
        let (k, y) = problem(7, 1);
        let rvm = RvmBetaConditional::new(&k, y.view()).unwrap();
        let sp = BetaConditional::new(&k, y.view()).unwrap();
        for &(lambda, tau) in &[(0.3, 2.0), (5.0, 0.1), (1.0, 1.0)] {
            let d = Array1::from_elem(k.dim(), lambda);
            let (m1, c1) = rvm.moments(d.view(), tau).unwrap();
            let (m2, c2) = sp.moments(lambda, tau).unwrap();
            for (a, b) in m1.iter().zip(&m2) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in c1.iter().zip(&c2) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn huge_penalties_shrink_to_zero() {
        let (k, y) = problem(6, 2);
        let d = Array1::from_elem(k.dim(), 1e12);
        let draw = rvm_sample_beta(&k, y.view(), d.view(), 1.0, &mut rng::stream(1, 0)).unwrap();
        assert!(draw.dot(&draw).sqrt() < 1e-4);
    }

    #[test]
    fn inv_sigma2_moment() {
        // rss = 2, n = 4, c = 1, d = 0 -> Gamma(3, 1).
        let mut r = rng::stream(2, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_inv_sigma2_from_rss(2.0, 4, 1.0, 0.0, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() < 4.0 * (3.0 / n as f64).sqrt());

        // Through the public entry point: beta = 0 leaves rss = y'y = 2.
        let mut km = Array2::<f64>::zeros((4, 5));
        km.column_mut(0).fill(1.0);
        let k = DesignMatrix::from_matrix(km, KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let y = array![1.0, 1.0, 0.0, 0.0];
        let beta = Array1::<f64>::zeros(5);
        let mean: f64 = (0..n)
            .map(|_| rvm_sample_inv_sigma2(&k, y.view(), beta.view(), 1.0, 0.0, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() < 4.0 * (3.0 / n as f64).sqrt());
    }

    #[test]
    fn exact_interpolation_with_zero_d_errors() {
        let k = DesignMatrix::<f64>::from_matrix(
            array![[1.0, 1.0, 0.2], [1.0, 0.2, 1.0]],
            KernelSpec::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let beta = array![1.0, 2.0, -1.0];
        let y = k.view().dot(&beta);
        let err = rvm_sample_inv_sigma2(&k, y.view(), beta.view(), 0.0, 0.0, &mut rng::stream(0, 0));
        assert!(matches!(err, Err(Error::InvalidGamma { .. })));
    }

    #[test]
    fn lambda_i_moment_and_errors() {
        let mut r = rng::stream(3, 0);
        let n = 200_000;
        let mean: f64 = (0..n)
            .map(|_| rvm_sample_lambda_i(0.0, 0.001, 0.01, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        // Gamma(0.501, 0.01): mean 50.1, variance 5010.
        assert!((mean - 50.1).abs() < 4.0 * (5010.0 / n as f64).sqrt(), "mean {mean}");
        assert!(rvm_sample_lambda_i(0.0, 0.001, 0.0, &mut r).is_err());
        assert!(rvm_sample_lambda_i(1.0, -0.5, 1.0, &mut r).is_err());
    }

    #[test]
    fn deterministic_and_positive() {
        let (k, y) = problem(8, 4);
        let cfg = RvmConfig::new(2_000).with_seed(7);
        let a = rvm_run_gibbs(&cfg, &k, y.view()).unwrap();
        let b = rvm_run_gibbs(&cfg, &k, y.view()).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.lambdas, b.lambdas);
        assert_eq!(a.inv_sigma2, b.inv_sigma2);
        assert!(a.lambdas.iter().all(|l| *l > 0.0 && l.is_finite()));
        assert!(a.inv_sigma2.iter().all(|l| *l > 0.0 && l.is_finite()));
        assert!(a.beta.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scan_order_noise_and_penalties_before_beta() {
        let (k, y) = problem(5, 5);
        let cfg = RvmConfig::new(4).with_burn_in(1).with_seed(11);
        let draws = rvm_run_gibbs(&cfg, &k, y.view()).unwrap();

        let cond = RvmBetaConditional::new(&k, y.view()).unwrap();
        let mut r = rng::stream(11, 0);
        let mut lambdas = Array1::from_elem(k.dim(), 1.0);
        let mut beta = cond.sample(lambdas.view(), 1.0, &mut r).unwrap();
        for it in 0..5 {
            let tau = rvm_sample_inv_sigma2(&k, y.view(), beta.view(), 0.0, 0.0, &mut r).unwrap();
            for i in 0..k.dim() {
                lambdas[i] = rvm_sample_lambda_i(beta[i], 0.001, 0.01, &mut r).unwrap();
            }
            beta = cond.sample(lambdas.view(), tau, &mut r).unwrap();
            if it >= 1 {
                assert_eq!(draws.inv_sigma2[it - 1], tau);
                assert_eq!(draws.lambdas.row(it - 1), lambdas.view());
                assert_eq!(draws.beta.row(it - 1), beta.view());
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (k, y) = problem(4, 6);
        let mut cfg = RvmConfig::new(5);
        cfg.init_lambda = vec![1.0, 2.0];
        assert!(matches!(rvm_run_gibbs(&cfg, &k, y.view()), Err(Error::DimensionMismatch { .. })));
        cfg.init_lambda = vec![0.0];
        assert!(rvm_run_gibbs(&cfg, &k, y.view()).is_err());
    }
}
