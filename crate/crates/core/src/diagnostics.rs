//! Convergence and Monte Carlo error: Gelman–Rubin PSRF, multivariate
//! batch-means / spectral-variance estimates of the asymptotic covariance
//! `Sigma` of the `beta` chain, and the prediction MCSE
//! `sqrt(k' Sigma k / M)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Conventional "not yet converged" threshold; a tool default.
pub const PSRF_WARN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPsrf {
    pub name: String,
    pub psrf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfReport {
    pub per_parameter: Vec<ParameterPsrf>,
    pub max_psrf: f64,
    pub chains: usize,
    pub draws_per_chain: usize,
}

impl PsrfReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ParameterPsrf> {
        self.per_parameter.iter().filter(|p| p.psrf > PSRF_WARN)
    }
}

/// Original (unsplit) Gelman–Rubin factor per column:
/// `sqrt(((N-1)/N W + B/N) / W)` with `W` the mean within-chain variance and
/// `B/N` the variance of the chain means. Values are reported as computed;
/// with finite `N` they can dip just below one.
pub fn psrf<T: Real>(chains: &[ArrayView2<T>], names: Option<&[String]>) -> Result<PsrfReport> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::invalid("PSRF needs at least two chains"));
    }
    let (n, p) = chains[0].dim();
    if n < 10 {
        return Err(Error::invalid(format!("PSRF needs at least 10 draws per chain, got {n}")));
    }
    for c in chains {
        if c.dim() != (n, p) {
            return Err(Error::invalid(format!(
                "chains must share a shape: {:?} vs {:?}",
                c.dim(),
                (n, p)
            )));
        }
    }
    if let Some(names) = names {
        if names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: names.len(),
            });
        }
    }
    let nf = n as f64;
    let mf = m as f64;
    let mut per_parameter = Vec::with_capacity(p);
    for j in 0..p {
        let mut means = Vec::with_capacity(m);
        let mut within = 0.0;
        for c in chains {
            let col = c.column(j);
            let mean = col.iter().map(|v| v.as_f64()).sum::<f64>() / nf;
            within += col.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            means.push(mean);
        }
        let w = within / mf;
        let grand = means.iter().sum::<f64>() / mf;
        let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (mf - 1.0);
        if !(w > 0.0) {
            return Err(Error::ZeroWithinVariance(j));
        }
        let v_hat = (nf - 1.0) / nf * w + b_over_n;
        per_parameter.push(ParameterPsrf {
            name: names.map_or_else(|| format!("p{j}"), |ns| ns[j].clone()),
            psrf: (v_hat / w).sqrt(),
        });
    }
    let max_psrf = per_parameter.iter().map(|p| p.psrf).fold(f64::NEG_INFINITY, f64::max);
    Ok(PsrfReport {
        per_parameter,
        max_psrf,
        chains: m,
        draws_per_chain: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovEstimator {
    BatchMeans,
    /// Tukey–Hanning lag window truncated at `floor(sqrt(M))`.
    SpectralVariance,
}

/// Estimate of the asymptotic covariance `Sigma` in
/// `sqrt(M) (beta_bar_M - E beta) -> N(0, Sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeansCov {
    pub sigma_hat: Array2<f64>,
    pub estimator: CovEstimator,
    /// Batch size, or lag truncation for the spectral estimator.
    pub batch_size: usize,
    pub batch_count: usize,
    /// Draws the estimate refers to (summed over chains when pooled).
    pub m: usize,
}

pub const MIN_DRAWS: usize = 100;

fn centered<T: Real>(draws: ArrayView2<T>) -> Result<(Array2<f64>, Array1<f64>)> {
    let m = draws.nrows();
    if m < MIN_DRAWS {
        return Err(Error::invalid(format!(
            "covariance estimation needs at least {MIN_DRAWS} draws, got {m}"
        )));
    }
    let x = draws.mapv(|v| v.as_f64());
    let mean = x.mean_axis(Axis(0)).unwrap();
    Ok((&x - &mean, mean))
}

fn symmetrize(s: &mut Array2<f64>) {
    let d = s.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
}

/// Non-overlapping batch means with batch size `floor(sqrt(M))`; trailing
/// draws that do not fill a batch are dropped.
pub fn batch_means_cov<T: Real>(draws: ArrayView2<T>) -> Result<BatchMeansCov> {
    let (x, _) = centered(draws)?;
    let m = x.nrows();
    let bs = (m as f64).sqrt().floor() as usize;
    let bc = m / bs;
    let used = x.slice(ndarray::s![..bs * bc, ..]);
    let overall = used.mean_axis(Axis(0)).unwrap();
    let d = x.ncols();
    let mut dev = Array2::<f64>::zeros((bc, d));
    for k in 0..bc {
        let mean = used.slice(ndarray::s![k * bs..(k + 1) * bs, ..]).mean_axis(Axis(0)).unwrap();
        dev.row_mut(k).assign(&(&mean - &overall));
    }
    let mut sigma_hat = dev.t().dot(&dev) * (bs as f64 / (bc as f64 - 1.0));
    symmetrize(&mut sigma_hat);
    Ok(BatchMeansCov {
        sigma_hat,
        estimator: CovEstimator::BatchMeans,
        batch_size: bs,
        batch_count: bc,
        m,
    })
}

/// Lag-window estimate `Gamma_0 + sum_{k<b} w(k) (Gamma_k + Gamma_k')` with
/// `w(k) = (1 + cos(pi k / b)) / 2` and `b = floor(sqrt(M))`.
pub fn spectral_variance_cov<T: Real>(draws: ArrayView2<T>) -> Result<BatchMeansCov> {
    let (x, _) = centered(draws)?;
    let m = x.nrows();
    let b = (m as f64).sqrt().floor() as usize;
    let mf = m as f64;
    let mut sigma_hat = x.t().dot(&x) / mf;
    for k in 1..b {
        let w = 0.5 * (1.0 + (std::f64::consts::PI * k as f64 / b as f64).cos());
        let lead = x.slice(ndarray::s![..m - k, ..]);
        let lag = x.slice(ndarray::s![k.., ..]);
        let g = lead.t().dot(&lag) / mf;
        sigma_hat = sigma_hat + (&g + &g.t()) * w;
    }
    symmetrize(&mut sigma_hat);
    Ok(BatchMeansCov {
        sigma_hat,
        estimator: CovEstimator::SpectralVariance,
        batch_size: b,
        batch_count: m / b,
        m,
    })
}

pub fn estimate_cov<T: Real>(draws: ArrayView2<T>, estimator: CovEstimator) -> Result<BatchMeansCov> {
    match estimator {
        CovEstimator::BatchMeans => batch_means_cov(draws),
        CovEstimator::SpectralVariance => spectral_variance_cov(draws),
    }
}

impl BatchMeansCov {
    /// Pools per-chain estimates of independent chains: averages `Sigma`
    /// and sums the draw counts, so the MCSE refers to the pooled mean.
    pub fn pool(parts: &[BatchMeansCov]) -> Result<BatchMeansCov> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to pool"))?;
        let mut sigma_hat = Array2::<f64>::zeros(first.sigma_hat.dim());
        for p in parts {
            if p.sigma_hat.dim() != first.sigma_hat.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.sigma_hat.nrows(),
                    found: p.sigma_hat.nrows(),
                });
            }
            sigma_hat += &p.sigma_hat;
        }
        sigma_hat /= parts.len() as f64;
        Ok(BatchMeansCov {
            sigma_hat,
            estimator: first.estimator,
            batch_size: first.batch_size,
            batch_count: parts.iter().map(|p| p.batch_count).sum(),
            m: parts.iter().map(|p| p.m).sum(),
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.nrows()
    }
}

/// `sqrt(k' Sigma_hat k / M)`. Small negative quadratic forms (rounding on
/// a near-singular estimate) clamp to zero; anything below
/// `-1e-8 * trace(Sigma_hat) * |k|^2` is an error.
pub fn prediction_mcse(cov: &BatchMeansCov, k_new: ArrayView1<f64>) -> Result<f64> {
    if k_new.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            found: k_new.len(),
        });
    }
    let q = k_new.dot(&cov.sigma_hat.dot(&k_new));
    if q >= 0.0 {
        return Ok((q / cov.m as f64).sqrt());
    }
    let scale = cov.sigma_hat.diag().iter().map(|v| v.abs()).sum::<f64>() * k_new.dot(&k_new);
    if q < -1e-8 * scale {
        Err(Error::NegativeQuadraticForm(q))
    } else {
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, p: usize, seed: u64, shift: f64) -> Array2<f64> {
        let mut r = rng::stream(seed, 0);
        Array2::from_shape_simple_fn((n, p), || shift + r.sample::<f64, _>(StandardNormal))
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, 0);
        let mut x = 0.0;
        let mut out = Array2::zeros((n, 1));
        for t in 0..n {
            x = phi * x + r.sample::<f64, _>(StandardNormal);
            out[[t, 0]] = x;
        }
        out
    }

    #[test]
    fn iid_chains_near_one() {
        let chains: Vec<Array2<f64>> = (0..4).map(|s| normals(5_000, 3, s, 0.0)).collect();
        let views: Vec<_> = chains.iter().map(|c| c.view()).collect();
        let r = psrf(&views, None).unwrap();
        assert!(r.max_psrf < 1.01, "{}", r.max_psrf);
        assert_eq!(r.chains, 4);
        assert_eq!(r.draws_per_chain, 5_000);
        assert_eq!(r.per_parameter[2].name, "p2");
        assert_eq!(r.flagged().count(), 0);
    }

    #[test]
    fn separated_chains_flagged() {
        let a = normals(5_000, 1, 1, 0.0);
        let b = normals(5_000, 1, 2, 5.0);
        let r = psrf(&[a.view(), b.view()], Some(&["beta0".to_string()])).unwrap();
        assert!(r.max_psrf > 2.0);
        assert_eq!(r.flagged().next().unwrap().name, "beta0");
    }

    #[test]
    fn constant_parameter_is_an_error() {
        let mut a = normals(100, 2, 1, 0.0);
        a.column_mut(1).fill(3.0);
        let b = a.clone();
        assert!(matches!(psrf(&[a.view(), b.view()], None), Err(Error::ZeroWithinVariance(1))));
    }

    #[test]
    fn psrf_shape_checks() {
        let a = normals(100, 2, 1, 0.0);
        let short = normals(9, 2, 2, 0.0);
        assert!(psrf(&[a.view()], None).is_err());
        assert!(psrf(&[short.view(), short.view()], None).is_err());
        assert!(psrf(&[a.view(), normals(100, 3, 3, 0.0).view()], None).is_err());
        assert!(psrf(&[a.view(), a.view()], Some(&["x".to_string()])).is_err());
    }

    #[test]
    fn iid_covariance_recovered() {
        // x = L z with L L' = C.
        let l: Array2<f64> = array![[1.0, 0.0], [0.6, 0.8]];
        let c = l.dot(&l.t());
        let z = normals(100_000, 2, 7, 0.0);
        let x = z.dot(&l.t());
        for est in [batch_means_cov(x.view()).unwrap(), spectral_variance_cov(x.view()).unwrap()] {
            let err = (&est.sigma_hat - &c).mapv(|v| v * v).sum().sqrt() / c.mapv(|v| v * v).sum().sqrt();
            assert!(err < 0.15, "{:?} rel err {err}", est.estimator);
        }
        let bm = batch_means_cov(x.view()).unwrap();
        assert_eq!((bm.batch_size, bm.batch_count, bm.m), (316, 316, 100_000));
    }

    #[test]
    fn ar1_asymptotic_variance() {
        // phi = 0.5, unit innovations: sigma^2 / (1 - phi)^2 = 4.
        let x = ar1(100_000, 0.5, 3);
        let bm = batch_means_cov(x.view()).unwrap().sigma_hat[[0, 0]];
        let sv = spectral_variance_cov(x.view()).unwrap().sigma_hat[[0, 0]];
        assert!((bm - 4.0).abs() < 0.8, "batch means {bm}");
        assert!((sv - 4.0).abs() < 0.8, "spectral {sv}");
    }

    #[test]
    fn constant_chain_zero_cov() {
        let x = Array2::<f64>::from_elem((400, 3), 2.5);
        let bm = batch_means_cov(x.view()).unwrap();
        assert!(bm.sigma_hat.iter().all(|v| *v == 0.0));
        assert_eq!(prediction_mcse(&bm, array![1.0, 2.0, 3.0].view()).unwrap(), 0.0);
    }

    #[test]
    fn too_few_draws() {
        let x = normals(99, 2, 1, 0.0);
        assert!(batch_means_cov(x.view()).is_err());
        assert!(spectral_variance_cov(x.view()).is_err());
    }

    fn fixed(sigma: Array2<f64>, m: usize) -> BatchMeansCov {
        BatchMeansCov {
            sigma_hat: sigma,
            estimator: CovEstimator::BatchMeans,
            batch_size: 1,
            batch_count: 1,
            m,
        }
    }

    #[test]
    fn mcse_formula() {
        let c = fixed(Array2::eye(3), 10_000);
        assert!((prediction_mcse(&c, array![1.0, 0.0, 0.0].view()).unwrap() - 0.01).abs() < 1e-15);
        let c4 = fixed(Array2::eye(3), 40_000);
        let k = array![0.3, -1.0, 2.0];
        let ratio = prediction_mcse(&c4, k.view()).unwrap() / prediction_mcse(&c, k.view()).unwrap();
        assert!((ratio - 0.5).abs() < 1e-12);
        assert!(prediction_mcse(&c, array![1.0, 0.0].view()).is_err());
    }

    #[test]
    fn negative_forms() {
        let tiny = fixed(array![[1.0, 0.0], [0.0, -1e-12]], 100);
        assert_eq!(prediction_mcse(&tiny, array![0.0, 1.0].view()).unwrap(), 0.0);
        let broken = fixed(array![[1.0, 0.0], [0.0, -0.5]], 100);
        assert!(matches!(
            prediction_mcse(&broken, array![0.0, 1.0].view()),
            Err(Error::NegativeQuadraticForm(_))
        ));
    }

    #[test]
    fn shuffled_chain_loses_autocorrelation() {
        let x = ar1(40_000, 0.8, 5);
        let correlated = batch_means_cov(x.view()).unwrap().sigma_hat[[0, 0]];
        let mut idx: Vec<usize> = (0..x.nrows()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng::stream(6, 0));
        let shuffled = x.select(Axis(0), &idx);
        let white = batch_means_cov(shuffled.view()).unwrap().sigma_hat[[0, 0]];
        let var = x.column(0).var(1.0);
        assert!(correlated > 5.0 * var);
        assert!((white / var - 1.0).abs() < 0.3, "white {white} var {var}");
    }

    #[test]
    fn pooling_sums_draws() {
        let a = batch_means_cov(normals(400, 2, 1, 0.0).view()).unwrap();
        let b = batch_means_cov(normals(400, 2, 2, 0.0).view()).unwrap();
        let p = BatchMeansCov::pool(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.m, 800);
        let avg = (&a.sigma_hat + &b.sigma_hat) / 2.0;
        assert!(p.sigma_hat.iter().zip(avg.iter()).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn psrf_affine_invariant(seed in 0u64..1000, shift in -50.0f64..50.0, scale in 0.01f64..100.0) {
            let a = normals(200, 2, seed, 0.0);
            let b = normals(200, 2, seed + 1, 0.3);
            let base = psrf(&[a.view(), b.view()], None).unwrap();
            let ta = a.mapv(|v| v * scale + shift);
            let tb = b.mapv(|v| v * scale + shift);
            let moved = psrf(&[ta.view(), tb.view()], None).unwrap();
            for (x, y) in base.per_parameter.iter().zip(&moved.per_parameter) {
                prop_assert!((x.psrf - y.psrf).abs() < 1e-9);
            }
        }

        #[test]
        fn psrf_not_far_below_one(seed in 0u64..1000) {
            let chains: Vec<Array2<f64>> = (0..3).map(|s| normals(50, 2, seed * 7 + s, 0.0)).collect();
            let views: Vec<_> = chains.iter().map(|c| c.view()).collect();
            let r = psrf(&views, None).unwrap();
            // (N-1)/N W + B/N >= (N-1)/N W.
            for p in &r.per_parameter {
                prop_assert!(p.psrf >= (49.0f64 / 50.0).sqrt() - 1e-12);
            }
        }

        #[test]
        fn batch_means_symmetric_psd(seed in 0u64..1000, m in 100usize..2000) {
            let x = normals(m, 3, seed, 0.0);
            let est = batch_means_cov(x.view()).unwrap();
            let s = &est.sigma_hat;
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((s[[i, j]] - s[[j, i]]).abs() < 1e-10);
                }
            }
            let tr: f64 = s.diag().sum();
            prop_assert!(symmetric_eigenvalues(s.view())[0] >= -1e-8 * tr);
        }

        #[test]
        fn mcse_linear_in_norm(c in 0.01f64..10.0, alpha in 0.01f64..100.0, seed in 0u64..100) {
            let mut r = rng::stream(seed, 0);
            let k: Array1<f64> = (0..4).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let cov = fixed(Array2::eye(4) * c, 1000);
            let a = prediction_mcse(&cov, k.view()).unwrap();
            let b = prediction_mcse(&cov, (&k * alpha).view()).unwrap();
            prop_assert!((b - alpha * a).abs() <= 1e-12 * b.max(1.0));
            prop_assert!((a - (c * k.dot(&k) / 1000.0).sqrt()).abs() < 1e-12);
        }
    }
}
