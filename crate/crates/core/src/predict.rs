//! Point predictions `k_new' beta_bar` from posterior draws, with the Monte
//! Carlo standard error for the single-penalty model.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateScaling, Standardization};
use crate::diagnostics::{estimate_cov, prediction_mcse, BatchMeansCov, CovEstimator};
use crate::error::{Error, Result};
use crate::kernels::{prediction_row, KernelSpec};
use crate::real::Real;
use crate::rvm::RvmDraws;
use crate::sprvm::SprvmDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rvm,
    Sprvm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rvm => "rvm",
            Method::Sprvm => "sprvm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rvm" => Ok(Method::Rvm),
            "sprvm" => Ok(Method::Sprvm),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected rvm or sprvm)"))),
        }
    }
}

/// Anything carrying a retained `beta` chain.
pub trait BetaDraws<T> {
    const METHOD: Method;
    fn beta(&self) -> ArrayView2<'_, T>;
    fn kernel(&self) -> &KernelSpec;
}

impl<T: Real> BetaDraws<T> for SprvmDraws<T> {
    const METHOD: Method = Method::Sprvm;
    fn beta(&self) -> ArrayView2<'_, T> {
        self.beta.view()
    }
    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

impl<T: Real> BetaDraws<T> for RvmDraws<T> {
    const METHOD: Method = Method::Rvm;
    fn beta(&self) -> ArrayView2<'_, T> {
        self.beta.view()
    }
    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

/// Column means of the retained draws, accumulated in `f64`.
pub fn posterior_mean_beta<T: Real>(draws: ArrayView2<T>) -> Result<Array1<f64>> {
    if draws.nrows() == 0 {
        return Err(Error::invalid("no draws to average"));
    }
    Ok(draws.mapv(|v| v.as_f64()).mean_axis(Axis(0)).unwrap())
}

/// Pooled mean over chains, weighted by chain length.
fn pooled_mean<T: Real>(chains: &[ArrayView2<T>]) -> Result<(Array1<f64>, usize)> {
    let first = chains.first().ok_or_else(|| Error::invalid("no chains"))?;
    let mut sum = Array1::<f64>::zeros(first.ncols());
    let mut m = 0;
    for c in chains {
        if c.ncols() != first.ncols() {
            return Err(Error::DimensionMismatch {
                expected: first.ncols(),
                found: c.ncols(),
            });
        }
        for row in c.rows() {
            sum.zip_mut_with(&row, |s, v| *s += v.as_f64());
        }
        m += c.nrows();
    }
    if m == 0 {
        return Err(Error::invalid("no draws to average"));
    }
    Ok((sum / m as f64, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Raw response scale.
    pub point: f64,
    pub point_standardized: f64,
    mcse: Option<f64>,
    mcse_standardized: Option<f64>,
    pub method: Method,
    pub m_used: usize,
}

impl PredictionResult {
    /// Raw-scale MCSE; always `None` for the multi-penalty model.
    pub fn mcse(&self) -> Option<f64> {
        self.mcse
    }

    pub fn mcse_standardized(&self) -> Option<f64> {
        self.mcse_standardized
    }
}

/// Everything needed to predict at new covariates after a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub method: Method,
    pub kernel: KernelSpec,
    pub beta_mean: Array1<f64>,
    /// `Sigma_hat` for the pooled `beta` chain; single-penalty model only.
    pub cov: Option<BatchMeansCov>,
    pub m_used: usize,
    pub x_train: Array2<f64>,
    pub scale: Standardization,
    #[serde(default)]
    pub covariate_scaling: Option<CovariateScaling>,
}

impl Predictor {
    pub fn from_sprvm<T: Real>(
        chains: &[SprvmDraws<T>],
        x_train: &Array2<T>,
        scale: Standardization,
        estimator: CovEstimator,
    ) -> Result<Self> {
        let views: Vec<_> = chains.iter().map(|c| c.beta.view()).collect();
        let (beta_mean, m_used) = pooled_mean(&views)?;
        let parts = views
            .iter()
            .map(|v| estimate_cov(*v, estimator))
            .collect::<Result<Vec<_>>>()?;
        Ok(Predictor {
            method: Method::Sprvm,
            kernel: chains[0].kernel,
            beta_mean,
            cov: Some(BatchMeansCov::pool(&parts)?),
            m_used,
            x_train: x_train.mapv(|v| v.as_f64()),
            scale,
            covariate_scaling: None,
        })
    }

    pub fn from_rvm<T: Real>(chains: &[RvmDraws<T>], x_train: &Array2<T>, scale: Standardization) -> Result<Self> {
        let views: Vec<_> = chains.iter().map(|c| c.beta.view()).collect();
        let (beta_mean, m_used) = pooled_mean(&views)?;
        Ok(Predictor {
            method: Method::Rvm,
            kernel: chains[0].kernel,
            beta_mean,
            cov: None,
            m_used,
            x_train: x_train.mapv(|v| v.as_f64()),
            scale,
            covariate_scaling: None,
        })
    }

    pub fn with_covariate_scaling(mut self, scaling: Option<CovariateScaling>) -> Self {
        self.covariate_scaling = scaling;
        self
    }

    /// `x_new` is on the caller's covariate scale; any stored covariate
    /// scaling is applied first.
    pub fn predict(&self, x_new: ArrayView1<f64>) -> Result<PredictionResult> {
        if x_new.len() != self.x_train.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.x_train.ncols(),
                found: x_new.len(),
            });
        }
        let x = match &self.covariate_scaling {
            Some(s) => s.apply(&x_new.to_owned().insert_axis(Axis(0))).row(0).to_owned(),
            None => x_new.to_owned(),
        };
        let row = prediction_row(&self.kernel, &self.x_train, x.view())?;
        self.predict_row(row.view())
    }

    /// Prediction from an explicit `[1, K(x_new, x_1), ..., K(x_new, x_n)]`.
    pub fn predict_row(&self, k_new: ArrayView1<f64>) -> Result<PredictionResult> {
        if k_new.len() != self.beta_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta_mean.len(),
                found: k_new.len(),
            });
        }
        let point_standardized = k_new.dot(&self.beta_mean);
        let mcse_standardized = match (&self.method, &self.cov) {
            (Method::Sprvm, Some(cov)) => Some(prediction_mcse(cov, k_new)?),
            (Method::Sprvm, None) => return Err(Error::invalid("single-penalty predictor without Sigma_hat")),
            (Method::Rvm, _) => None,
        };
        Ok(PredictionResult {
            point: self.scale.to_raw(point_standardized),
            point_standardized,
            mcse: mcse_standardized.map(|s| s * self.scale.sd),
            mcse_standardized,
            method: self.method,
            m_used: self.m_used,
        })
    }

    /// One prediction per row of `x_new`, in row order.
    pub fn predict_batch(&self, x_new: ArrayView2<f64>) -> Result<Vec<PredictionResult>> {
        (0..x_new.nrows())
            .into_par_iter()
            .map(|i| self.predict(x_new.row(i)))
            .collect()
    }
}

/// Prediction from a single chain of draws.
pub fn predict_point<T: Real, D: BetaDraws<T>>(
    draws: &D,
    x_train: &Array2<T>,
    x_new: ArrayView1<T>,
    standardization: Standardization,
) -> Result<PredictionResult> {
    let beta = draws.beta();
    let beta_mean = posterior_mean_beta(beta)?;
    let cov = match D::METHOD {
        Method::Sprvm => Some(estimate_cov(beta, CovEstimator::BatchMeans)?),
        Method::Rvm => None,
    };
    let p = Predictor {
        method: D::METHOD,
        kernel: *draws.kernel(),
        beta_mean,
        cov,
        m_used: beta.nrows(),
        x_train: x_train.mapv(|v| v.as_f64()),
        scale: standardization,
        covariate_scaling: None,
    };
    p.predict(x_new.mapv(|v| v.as_f64()).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, standardize_response};
    use crate::kernels::build_design;
    use crate::rvm::{rvm_run_gibbs, RvmConfig};
    use crate::sprvm::{run_gibbs, run_chains, BetaConditional, SprvmConfig};
    use ndarray::array;

    #[test]
    fn mean_of_draws() {
        let one = array![[1.5, -2.0]];
        assert_eq!(posterior_mean_beta(one.view()).unwrap(), array![1.5, -2.0]);
        let alt = Array2::from_shape_fn((10, 2), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        assert_eq!(posterior_mean_beta(alt.view()).unwrap(), array![0.5, 0.5]);
        assert!(posterior_mean_beta(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    fn fitted(n: usize, draws: usize) -> (crate::data::Dataset<f64>, Vec<SprvmDraws<f64>>) {
        let d = standardize_response(&make_synthetic::<f64>(n, 2, 0.1, 3).unwrap()).unwrap();
        let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
        let chains = run_chains(&SprvmConfig::new(10.0, draws).with_seed(5), &k, d.y.view(), 2).unwrap();
        (d, chains)
    }

    #[test]
    fn zero_draws_predict_response_mean() {
        let (d, mut chains) = fitted(8, 200);
        for c in &mut chains {
            c.beta.fill(0.0);
        }
        let p = Predictor::from_sprvm(&chains, &d.x, d.scale(), CovEstimator::BatchMeans).unwrap();
        let r = p.predict(d.x.row(0)).unwrap();
        assert_eq!(r.point_standardized, 0.0);
        assert!((r.point - d.scale().mean).abs() < 1e-12);
        assert_eq!(r.mcse(), Some(0.0));
    }

    #[test]
    fn rvm_never_has_mcse() {
        let d = standardize_response(&make_synthetic::<f64>(8, 2, 0.1, 4).unwrap()).unwrap();
        let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
        let draws = rvm_run_gibbs(&RvmConfig::new(300).with_seed(1), &k, d.y.view()).unwrap();
        let r = predict_point(&draws, &d.x, d.x.row(2), d.scale()).unwrap();
        assert_eq!(r.method, Method::Rvm);
        assert!(r.mcse().is_none() && r.mcse_standardized().is_none());
        assert!(r.point.is_finite());
        let p = Predictor::from_rvm(&[draws], &d.x, d.scale()).unwrap();
        assert!(p.predict(d.x.row(1)).unwrap().mcse().is_none());
    }

    #[test]
    fn sprvm_mcse_scales_with_sd() {
        let (d, chains) = fitted(8, 500);
        let r = predict_point(&chains[0], &d.x, d.x.row(3), d.scale()).unwrap();
        let (raw, std) = (r.mcse().unwrap(), r.mcse_standardized().unwrap());
        assert!(std > 0.0);
        assert!((raw - std * d.scale().sd).abs() < 1e-15);
        assert_eq!(r.m_used, 500);
        // De-standardization round trip.
        assert!((d.scale().to_raw(r.point_standardized) - r.point).abs() < 1e-15);
    }

    #[test]
    fn pooled_predictor_counts_all_draws() {
        let (d, chains) = fitted(8, 300);
        let p = Predictor::from_sprvm(&chains, &d.x, d.scale(), CovEstimator::BatchMeans).unwrap();
        assert_eq!(p.m_used, 600);
        assert_eq!(p.cov.as_ref().unwrap().m, 600);
        let batch = p.predict_batch(d.x.view()).unwrap();
        assert_eq!(batch.len(), 8);
        assert_eq!(batch[4], p.predict(d.x.row(4)).unwrap());
    }

    #[test]
    fn linear_in_prediction_row() {
        let (d, chains) = fitted(6, 200);
        let p = Predictor::from_sprvm(&chains, &d.x, d.scale(), CovEstimator::BatchMeans).unwrap();
        let u = prediction_row(&p.kernel, &p.x_train, d.x.row(0)).unwrap();
        let v = prediction_row(&p.kernel, &p.x_train, d.x.row(1)).unwrap();
        let (alpha, gamma) = (0.7, -1.3);
        let mix = &u * alpha + &v * gamma;
        let lhs = p.predict_row(mix.view()).unwrap().point_standardized;
        let rhs = alpha * p.predict_row(u.view()).unwrap().point_standardized
            + gamma * p.predict_row(v.view()).unwrap().point_standardized;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn converges_to_fixed_lambda_mean() {
        // Freeze lambda: repeated draws from beta | lambda average to the
        // closed-form conditional mean.
        let d = standardize_response(&make_synthetic::<f64>(6, 2, 0.1, 8).unwrap()).unwrap();
        let k = build_design(&KernelSpec::gaussian(1.0).unwrap(), &d.x).unwrap();
        let cond = BetaConditional::new(&k, d.y.view()).unwrap();
        let (mean, cov) = cond.moments(0.5, 5.0).unwrap();
        let mut r = crate::rng::stream(1, 0);
        let m = 20_000;
        let mut draws = Array2::<f64>::zeros((m, 7));
        for i in 0..m {
            draws.row_mut(i).assign(&cond.sample(0.5, 5.0, &mut r).unwrap());
        }
        let est = posterior_mean_beta(draws.view()).unwrap();
        for j in 0..7 {
            assert!((est[j] - mean[j]).abs() < 4.0 * (cov[[j, j]] / m as f64).sqrt());
        }
    }

    #[test]
    fn interpolates_training_points_when_noiseless() {
        let mut d = make_synthetic::<f64>(25, 1, 0.0, 9).unwrap();
        d = standardize_response(&d).unwrap();
        let k = build_design(&KernelSpec::gaussian(0.5).unwrap(), &d.x).unwrap();
        let draws = run_gibbs(&SprvmConfig::new(1e4, 2_000).with_seed(2), &k, d.y.view()).unwrap();
        for i in [0, 7, 19] {
            let r = predict_point(&draws, &d.x, d.x.row(i), d.scale()).unwrap();
            assert!((r.point_standardized - d.y[i]).abs() < 0.1, "row {i}: {} vs {}", r.point_standardized, d.y[i]);
        }
    }

    #[test]
    fn dimension_checks() {
        let (d, chains) = fitted(6, 200);
        let p = Predictor::from_sprvm(&chains, &d.x, d.scale(), CovEstimator::BatchMeans).unwrap();
        assert!(p.predict(array![1.0].view()).is_err());
        assert!(p.predict_row(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let (d, chains) = fitted(6, 200);
        let p = Predictor::from_sprvm(&chains, &d.x, d.scale(), CovEstimator::SpectralVariance).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: Predictor = serde_json::from_str(&s).unwrap();
        assert_eq!(back.predict(d.x.row(0)).unwrap(), p.predict(d.x.row(0)).unwrap());
        assert_eq!("SPRVM".parse::<Method>().unwrap(), Method::Sprvm);
        assert!("svm".parse::<Method>().is_err());
    }
}
