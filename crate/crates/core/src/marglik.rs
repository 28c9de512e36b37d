//! Marginal likelihood of the single-penalty model with `beta` and then
//! `lambda` integrated out, and grid search over `(theta, xi)`.
//!
//! Integrating `beta` gives `y | lambda ~ N(0, xi^{-1} I + lambda^{-1} K K')`.
//! With `c = lambda / xi` and `A = K K' + c I_n`,
//!
//! ```text
//! log f(y | lambda) = -(n/2) log 2pi + (n/2) log lambda - (1/2) log|A| - (lambda/2) y' A^{-1} y
//! ```
//!
//! which equals the `(n+1)`-dimensional form through
//! `|K'K + c I_{n+1}| = c |K K' + c I_n|`. The `lambda` integral is done in
//! `u = log lambda`:
//!
//! ```text
//! m(y) = ∫ exp(g(u)) du,   g(u) = log f(y | e^u) + a u - b e^u
//! ```
//!
//! so the improper prior's normalizer is fixed at one.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{build_design, DesignMatrix, KernelFamily, KernelSpec};
use crate::linalg::{symmetric_eigen, Cholesky};
use crate::real::Real;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Core interval `[-CORE, CORE]` in `log lambda`, widened in `STEP` pieces
/// up to `CAP`.
const CORE: f64 = 40.0;
const STEP: f64 = 10.0;
const CAP: f64 = 80.0;
const STABLE_REL: f64 = 1e-8;
/// A tail whose log-integrand rises, or falls by less than this over the
/// last widening step, is treated as non-integrable.
const TAIL_DROP: f64 = 1e-6;

/// `log f(y | lambda, xi)` by one Cholesky factorization of `K K' + (lambda/xi) I`.
pub fn log_density_y_given_lambda<T: Real>(lambda: f64, xi: f64, k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<f64> {
    check_positive(lambda, "lambda")?;
    check_positive(xi, "xi")?;
    if y.len() != k.n() {
        return Err(Error::DimensionMismatch {
            expected: k.n(),
            found: y.len(),
        });
    }
    let kk = k.view().mapv(|v| v.as_f64());
    let mut a = kk.dot(&kk.t());
    let c = lambda / xi;
    for i in 0..a.nrows() {
        a[[i, i]] += c;
    }
    let chol = Cholesky::with_jitter(a.view()).map_err(|condition| Error::Factorization { lambda, xi, condition })?;
    let y64: Array1<f64> = y.mapv(|v| v.as_f64());
    let n = y64.len() as f64;
    let quad = y64.dot(&chol.solve(y64.view()));
    Ok(-0.5 * n * LN_2PI + 0.5 * n * lambda.ln() - 0.5 * chol.log_det() - 0.5 * lambda * quad)
}

fn check_positive(v: f64, name: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `log f(y | lambda)` for many `lambda` at fixed `(K, y)`, from one
/// eigendecomposition of `K K'`: O(n) per evaluation and exact across the
/// whole `e^{±80}` range.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    /// Eigenvalues of `K K'`, clamped at zero.
    mu: Vec<f64>,
    /// Squared coordinates of `y` in the eigenbasis.
    z2: Vec<f64>,
}

impl SpectralDensity {
    pub fn new<T: Real>(k: &DesignMatrix<T>, y: ArrayView1<T>) -> Result<Self> {
        if y.len() != k.n() {
            return Err(Error::DimensionMismatch {
                expected: k.n(),
                found: y.len(),
            });
        }
        let kk = k.view().mapv(|v| v.as_f64());
        let (vals, vecs) = symmetric_eigen(kk.dot(&kk.t()).view());
        let z = vecs.t().dot(&y.mapv(|v| v.as_f64()));
        Ok(SpectralDensity {
            mu: vals.iter().map(|m| m.max(0.0)).collect(),
            z2: z.iter().map(|v| v * v).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn log_density(&self, lambda: f64, xi: f64) -> f64 {
        let c = lambda / xi;
        let n = self.n() as f64;
        let (mut logdet, mut quad) = (0.0, 0.0);
        for (m, z) in self.mu.iter().zip(&self.z2) {
            logdet += (m + c).ln();
            quad += z / (m + c);
        }
        -0.5 * n * LN_2PI + 0.5 * n * lambda.ln() - 0.5 * logdet - 0.5 * lambda * quad
    }
}

/// The `u = log lambda` integrand for fixed `(xi, a, b)`.
#[derive(Debug, Clone)]
struct LogIntegrand<'a> {
    density: &'a SpectralDensity,
    xi: f64,
    a: f64,
    b: f64,
}

impl LogIntegrand<'_> {
    fn g(&self, u: f64) -> f64 {
        let lambda = u.exp();
        let prior = if self.b == 0.0 { self.a * u } else { self.a * u - self.b * lambda };
        self.density.log_density(lambda, self.xi) + prior
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "value")]
pub enum LogMarginal {
    Finite(f64),
    Divergent,
}

impl LogMarginal {
    pub fn value(&self) -> Option<f64> {
        match self {
            LogMarginal::Finite(v) => Some(*v),
            LogMarginal::Divergent => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, LogMarginal::Finite(_))
    }
}

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1] (abscissae
// listed from the outside in; the last is the centre).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (integral, error estimate).
fn gk15(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

const MAX_PANELS: usize = 20_000;

/// Globally adaptive GK15 over `[lo, hi]` starting from `pieces` equal
/// panels; bisects the worst panel until the summed error estimate is
/// below `max(abs_tol, rel_tol * |I|)`.
fn adaptive(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, pieces: usize, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let width = (hi - lo) / pieces as f64;
    let mut panels: Vec<(f64, f64, f64, f64)> = (0..pieces)
        .map(|i| {
            let a = lo + width * i as f64;
            let b = if i + 1 == pieces { hi } else { a + width };
            let (v, e) = gk15(f, a, b);
            (a, b, v, e)
        })
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Quadrature(format!(
                "no convergence on [{lo}, {hi}] after {MAX_PANELS} panels (error estimate {err:e}, value {total:e})"
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (a, b, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, mid);
        let (v2, e2) = gk15(f, mid, b);
        panels.push((a, mid, v1, e1));
        panels.push((mid, b, v2, e2));
    }
}

/// Largest `g` on a 0.25-spaced grid over `[-CAP, CAP]`.
fn peak(ig: &LogIntegrand) -> f64 {
    let steps = (2.0 * CAP / 0.25) as usize;
    (0..=steps)
        .map(|i| ig.g(-CAP + 0.25 * i as f64))
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn tails_diverge(ig: &LogIntegrand) -> Result<bool> {
    let ends = [ig.g(CAP), ig.g(CAP - STEP), ig.g(-CAP), ig.g(-CAP + STEP)];
    if ends.iter().any(|v| v.is_nan()) {
        return Err(Error::Quadrature("log-integrand is NaN at the interval cap".into()));
    }
    let upper = ends[0] - ends[1];
    let lower = ends[2] - ends[3];
    Ok(upper > -TAIL_DROP || lower > -TAIL_DROP)
}

fn validate_prior(xi: f64, a: f64, b: f64) -> Result<()> {
    check_positive(xi, "xi")?;
    if !a.is_finite() || !(b >= 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("prior (a, b) must be finite with b >= 0, got ({a}, {b})")));
    }
    Ok(())
}

/// `log ∫ f(y | lambda) lambda^(a-1) e^(-b lambda) d lambda`.
///
/// The log-integrand is asymptotically linear in `log lambda` at both ends,
/// so beyond a reach `R` each tail is closed analytically as
/// `exp(g(R)) / |slope|`, with the slope taken over the last `STEP`. The
/// body starts on `[-40, 40]` and widens by 10 on each side up to
/// `[-80, 80]`; the first widening that changes body-plus-tails by at most
/// 1e-8 (relative) ends the search, and at the cap the tails are used as
/// they stand. `Divergent` is returned when either tail of the
/// log-integrand fails to decrease between 70 and 80.
pub fn log_marginal_likelihood<T: Real>(
    xi: f64,
    k: &DesignMatrix<T>,
    y: ArrayView1<T>,
    a: f64,
    b: f64,
) -> Result<LogMarginal> {
    validate_prior(xi, a, b)?;
    let density = SpectralDensity::new(k, y)?;
    log_marginal_from_density(&density, xi, a, b)
}

/// Analytic mass of the two tails beyond `±reach`, relative to `exp(shift)`.
/// Infinite when a tail is not yet decreasing at `reach`.
fn tail_masses(ig: &LogIntegrand, shift: f64, reach: f64) -> (f64, f64) {
    let one = |edge: f64, inner: f64| {
        let slope = (ig.g(edge) - ig.g(inner)) / STEP;
        if slope < 0.0 {
            (ig.g(edge) - shift).exp() / -slope
        } else {
            f64::INFINITY
        }
    };
    (one(-reach, -reach + STEP), one(reach, reach - STEP))
}

pub fn log_marginal_from_density(density: &SpectralDensity, xi: f64, a: f64, b: f64) -> Result<LogMarginal> {
    validate_prior(xi, a, b)?;
    let ig = LogIntegrand { density, xi, a, b };
    if tails_diverge(&ig)? {
        return Ok(LogMarginal::Divergent);
    }
    let shift = peak(&ig);
    if !shift.is_finite() {
        return Err(Error::Quadrature(format!("log-integrand peak is {shift}")));
    }
    let f = |u: f64| (ig.g(u) - shift).exp();
    let (abs_tol, rel_tol) = (1e-15, 1e-11);

    let mut body = adaptive(&f, -CORE, CORE, (2.0 * CORE) as usize, abs_tol, rel_tol)?;
    let with_tails = |body: f64, reach: f64| {
        let (lo, hi) = tail_masses(&ig, shift, reach);
        body + lo + hi
    };
    let mut estimate = with_tails(body, CORE);
    let mut reach = CORE;
    while reach < CAP {
        let next = reach + STEP;
        let pieces = STEP as usize;
        body += adaptive(&f, -next, -reach, pieces, abs_tol, rel_tol)? + adaptive(&f, reach, next, pieces, abs_tol, rel_tol)?;
        reach = next;
        let previous = estimate;
        estimate = with_tails(body, reach);
        if estimate.is_finite() && (estimate - previous).abs() <= STABLE_REL * estimate {
            break;
        }
    }
    if !(estimate.is_finite() && estimate > 0.0) {
        return Err(Error::Quadrature(format!("integral estimate is {estimate} after tail closure")));
    }
    Ok(LogMarginal::Finite(shift + estimate.ln()))
}

/// Tabulated posterior of `lambda` (with `beta` integrated out) on
/// `log lambda` panels of width 0.02 over `[-80, 80]`, with the mass
/// outside the table folded into the end points.
#[derive(Debug, Clone)]
pub struct LambdaPosterior {
    u: Vec<f64>,
    cdf: Vec<f64>,
}

impl LambdaPosterior {
    pub fn new<T: Real>(xi: f64, k: &DesignMatrix<T>, y: ArrayView1<T>, a: f64, b: f64) -> Result<Self> {
        validate_prior(xi, a, b)?;
        let density = SpectralDensity::new(k, y)?;
        if !log_marginal_from_density(&density, xi, a, b)?.is_finite() {
            return Err(Error::ImproperPosterior(format!(
                "lambda posterior does not normalize for a = {a}, b = {b}"
            )));
        }
        let ig = LogIntegrand {
            density: &density,
            xi,
            a,
            b,
        };
        let shift = peak(&ig);
        let f = |u: f64| (ig.g(u) - shift).exp();
        let panels = (2.0 * CAP / 0.02).round() as usize;
        let width = 2.0 * CAP / panels as f64;
        let mut u = Vec::with_capacity(panels + 1);
        let mut cdf = Vec::with_capacity(panels + 1);
        // Mass beyond the table ends, closed analytically.
        let (below, above) = tail_masses(&ig, shift, CAP);
        let mut acc = below;
        u.push(-CAP);
        cdf.push(below);
        for i in 0..panels {
            let lo = -CAP + width * i as f64;
            let hi = lo + width;
            acc += gk15(&f, lo, hi).0;
            u.push(hi);
            cdf.push(acc);
        }
        let total = acc + above;
        for c in &mut cdf {
            *c /= total;
        }
        Ok(LambdaPosterior { u, cdf })
    }

    /// `P(lambda <= x | y)`, linear in `log lambda` between knots.
    pub fn cdf(&self, lambda: f64) -> f64 {
        if !(lambda > 0.0) {
            return 0.0;
        }
        let u = lambda.ln();
        if u <= self.u[0] {
            return 0.0;
        }
        let last = self.u.len() - 1;
        if u >= self.u[last] {
            return 1.0;
        }
        let i = self.u.partition_point(|&x| x <= u) - 1;
        let t = (u - self.u[i]) / (self.u[i + 1] - self.u[i]);
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Kolmogorov–Smirnov distance between this CDF and a sample.
    pub fn ks_distance(&self, sample: &[f64]) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = self.cdf(*x);
                (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum CellStatus {
    Finite { log_ml: f64 },
    Divergent,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarglikCell {
    pub theta: f64,
    pub xi: f64,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarglikGrid {
    pub family: KernelFamily,
    pub theta_values: Vec<f64>,
    pub xi_values: Vec<f64>,
    /// Row-major over `theta_values` then `xi_values`.
    pub cells: Vec<MarglikCell>,
    pub theta_hat: f64,
    pub xi_hat: f64,
    pub best_log_ml: f64,
}

impl MarglikGrid {
    pub fn divergent_cells(&self) -> impl Iterator<Item = &MarglikCell> {
        self.cells.iter().filter(|c| c.status == CellStatus::Divergent)
    }
}

/// Highest finite cell; ties go to the smaller `theta`, then smaller `xi`.
pub fn select_argmax(cells: &[MarglikCell]) -> Option<&MarglikCell> {
    cells
        .iter()
        .filter_map(|c| match c.status {
            CellStatus::Finite { log_ml } => Some((c, log_ml)),
            _ => None,
        })
        .reduce(|best, cand| {
            let better = cand.1 > best.1
                || (cand.1 == best.1 && (cand.0.theta, cand.0.xi) < (best.0.theta, best.0.xi));
            if better {
                cand
            } else {
                best
            }
        })
        .map(|(c, _)| c)
}

/// Evaluates the log marginal likelihood on every `(theta, xi)` pair. One
/// design matrix and eigendecomposition per `theta`; cells run in parallel.
pub fn optimize_marglik<T: Real>(
    theta_grid: &[f64],
    xi_grid: &[f64],
    x: &ndarray::Array2<T>,
    y: ArrayView1<T>,
    family: KernelFamily,
    a: f64,
    b: f64,
) -> Result<MarglikGrid> {
    if theta_grid.is_empty() || xi_grid.is_empty() {
        return Err(Error::invalid("marginal-likelihood grids must be non-empty"));
    }
    for v in theta_grid.iter().chain(xi_grid) {
        check_positive(*v, "grid value")?;
    }
    let rows: Vec<Vec<MarglikCell>> = theta_grid
        .par_iter()
        .map(|&theta| {
            let density = KernelSpec::new(family, theta)
                .and_then(|spec| build_design(&spec, x))
                .and_then(|k| SpectralDensity::new(&k, y));
            xi_grid
                .iter()
                .map(|&xi| {
                    let status = match density.as_ref() {
                        Err(e) => CellStatus::Failed { reason: e.to_string() },
                        Ok(d) => match log_marginal_from_density(d, xi, a, b) {
                            Ok(LogMarginal::Finite(v)) => CellStatus::Finite { log_ml: v },
                            Ok(LogMarginal::Divergent) => CellStatus::Divergent,
                            Err(e) => CellStatus::Failed { reason: e.to_string() },
                        },
                    };
                    MarglikCell { theta, xi, status }
                })
                .collect()
        })
        .collect();
    let cells: Vec<MarglikCell> = rows.into_iter().flatten().collect();
    let best = select_argmax(&cells).ok_or(Error::AllDivergent)?;
    let (theta_hat, xi_hat) = (best.theta, best.xi);
    let best_log_ml = match best.status {
        CellStatus::Finite { log_ml } => log_ml,
        _ => unreachable!(),
    };
    for c in &cells {
        if let CellStatus::Failed { reason } = &c.status {
            log::warn!("marginal likelihood failed at theta = {}, xi = {}: {reason}", c.theta, c.xi);
        }
    }
    Ok(MarglikGrid {
        family,
        theta_values: theta_grid.to_vec(),
        xi_values: xi_grid.to_vec(),
        cells,
        theta_hat,
        xi_hat,
        best_log_ml,
    })
}
