//! Empirical drift check for the `lambda` chain with
//! `v(lambda) = lambda^m + lambda^{-s}`.
//!
//! For each starting `lambda` on a grid, one Gibbs scan is simulated many
//! times to estimate `E[v(lambda') | lambda]`. A least-squares slope of those
//! expectations against `v(lambda)` gives `rho_hat`; the envelope intercept
//! is `L = max_i (E_i - rho_hat v_i)`, so every grid point satisfies
//! `E_i <= rho_hat v_i + L`.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_lambda_given_beta, BetaConditional, SprvmConfig};
use crate::error::{Error, Result};
use crate::kernels::DesignMatrix;
use crate::real::Real;
use crate::rng;

pub fn drift_function(lambda: f64, m: f64, s: f64) -> f64 {
    lambda.powf(m) + lambda.powf(-s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub m: f64,
    pub s: f64,
    pub grid: Vec<f64>,
    pub v: Vec<f64>,
    /// Monte Carlo estimates of `E[v(lambda') | lambda]`.
    pub expected: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub rho_hat: f64,
    pub intercept: f64,
    pub linear_fit_ok: bool,
    /// Largest `(E_i - rho_hat v_i - L) / se_i`; never positive by
    /// construction of `L`, kept for reporting how tight the envelope is.
    pub max_excess_se: f64,
}

/// `m` in `(0, 1)`, `s` in `(0, 1]`; with `b = 0` the prior also needs
/// `m < -a` for `E[lambda'^m]` to stay finite.
#[allow(clippy::too_many_arguments)]
pub fn drift_check<T: Real>(
    config: &SprvmConfig,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    grid: &[f64],
    m: f64,
    s: f64,
    reps: usize,
) -> Result<DriftReport> {
    config.validate()?;
    let mut distinct: Vec<f64> = grid.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("drift grid needs at least two distinct points"));
    }
    if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("drift grid points must be positive and finite"));
    }
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::invalid(format!("m must lie in (0, 1), got {m}")));
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid(format!("s must lie in (0, 1], got {s}")));
    }
    if config.b == 0.0 && m >= -config.a {
        return Err(Error::invalid(format!(
            "with b = 0, m must be below -a = {}; got {m}",
            -config.a
        )));
    }
    if reps < 2 {
        return Err(Error::invalid("drift check needs at least two replicates"));
    }

    let cond = BetaConditional::new(k, y)?;
    let xi = T::lit(config.xi);
    let (a, b) = (T::lit(config.a), T::lit(config.b));
    let per_point: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(gi, &lambda)| -> Result<(f64, f64)> {
            let mut r = rng::stream(config.seed, gi as u64);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..reps {
                let beta = cond.sample(T::lit(lambda), xi, &mut r)?;
                let next = sample_lambda_given_beta(beta.view(), a, b, &mut r)?.as_f64();
                let v = drift_function(next, m, s);
                sum += v;
                sq += v * v;
            }
            let n = reps as f64;
            let mean = sum / n;
            let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
            Ok((mean, (var / n).sqrt()))
        })
        .collect::<Result<_>>()?;

    let v: Vec<f64> = grid.iter().map(|l| drift_function(*l, m, s)).collect();
    let expected: Vec<f64> = per_point.iter().map(|p| p.0).collect();
    let standard_errors: Vec<f64> = per_point.iter().map(|p| p.1).collect();

    let n = v.len() as f64;
    let vbar = v.iter().sum::<f64>() / n;
    let ebar = expected.iter().sum::<f64>() / n;
    let sxx: f64 = v.iter().map(|x| (x - vbar).powi(2)).sum();
    let sxy: f64 = v.iter().zip(&expected).map(|(x, e)| (x - vbar) * (e - ebar)).sum();
    let rho_hat = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let intercept = v
        .iter()
        .zip(&expected)
        .map(|(x, e)| e - rho_hat * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_excess_se = v
        .iter()
        .zip(&expected)
        .zip(&standard_errors)
        .map(|((x, e), se)| {
            let gap = e - rho_hat * x - intercept;
            if *se > 0.0 {
                gap / se
            } else {
                0.0
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(DriftReport {
        m,
        s,
        grid: grid.to_vec(),
        v,
        expected,
        standard_errors,
        rho_hat,
        intercept,
        linear_fit_ok: rho_hat < 1.0 && intercept.is_finite(),
        max_excess_se,
    })
}
