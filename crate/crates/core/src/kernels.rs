//! Reproducing kernels and the `n x (n+1)` design matrix with an intercept
//! column.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Laplace,
    #[serde(rename = "poly")]
    Polynomial,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
            KernelFamily::Polynomial => "poly",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplace" => Ok(KernelFamily::Laplace),
            "poly" | "polynomial" => Ok(KernelFamily::Polynomial),
            other => Err(Error::invalid(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel family plus its parameter. `theta` is a bandwidth for the
/// Gaussian and Laplace kernels and a positive integer degree for the
/// polynomial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub theta: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::invalid(format!("kernel parameter must be finite and positive, got {theta}")));
        }
        if family == KernelFamily::Polynomial && theta.fract() != 0.0 {
            return Err(Error::invalid(format!("polynomial degree must be a positive integer, got {theta}")));
        }
        Ok(KernelSpec { family, theta })
    }

    pub fn gaussian(theta: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, theta)
    }

    pub fn laplace(theta: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplace, theta)
    }

    pub fn polynomial(degree: u32) -> Result<Self> {
        Self::new(KernelFamily::Polynomial, degree as f64)
    }

    fn eval<T: Real>(&self, a: ArrayView1<T>, b: ArrayView1<T>) -> T {
        let theta = T::lit(self.theta);
        match self.family {
            KernelFamily::Gaussian => {
                let d2: T = a.iter().zip(b.iter()).map(|(u, v)| (*u - *v) * (*u - *v)).sum();
                (-d2 / (theta * theta)).exp()
            }
            KernelFamily::Laplace => {
                let d2: T = a.iter().zip(b.iter()).map(|(u, v)| (*u - *v) * (*u - *v)).sum();
                (-d2.sqrt() / theta).exp()
            }
            KernelFamily::Polynomial => {
                let base = T::one() + a.dot(&b);
                // Overflow check in log space; a silent infinity is never returned
                // as a finite-looking value downstream.
                if base != T::zero() && theta * base.abs().ln() > T::max_value().ln() {
                    return T::infinity();
                }
                base.powi(self.theta as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(theta={})", self.family, self.theta)
    }
}

pub fn kernel_value<T: Real>(spec: &KernelSpec, a: ArrayView1<T>, b: ArrayView1<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(spec.eval(a, b))
}

/// `K` with `K[i, 0] = 1` and `K[i, j+1] = k(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct DesignMatrix<T> {
    k: Array2<T>,
    spec: KernelSpec,
    source_rows: Arc<Array2<T>>,
}

impl<T: Real> DesignMatrix<T> {
    /// Wraps an explicit matrix (mostly for tests and hand-built examples).
    /// The intercept column is checked; the kernel block is taken as given.
    pub fn from_matrix(k: Array2<T>, spec: KernelSpec) -> Result<Self> {
        let n = k.nrows();
        if n == 0 || k.ncols() != n + 1 {
            return Err(Error::invalid(format!(
                "design matrix must be n x (n+1), got {} x {}",
                n,
                k.ncols()
            )));
        }
        if k.column(0).iter().any(|v| *v != T::one()) {
            return Err(Error::invalid("design matrix column 0 must be all ones"));
        }
        if let Some(((i, j), _)) = k.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteKernel { i, j: j.saturating_sub(1) });
        }
        Ok(DesignMatrix {
            k,
            spec,
            source_rows: Arc::new(Array2::zeros((n, 0))),
        })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.k
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.k.view()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn training_rows(&self) -> &Array2<T> {
        &self.source_rows
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Number of coefficients, `n + 1`.
    pub fn dim(&self) -> usize {
        self.k.ncols()
    }

    /// Kernel block entry `k(x_i, x_j)`.
    pub fn kernel(&self, i: usize, j: usize) -> T {
        self.k[[i, j + 1]]
    }
}

pub fn build_design<T: Real>(spec: &KernelSpec, x: &Array2<T>) -> Result<DesignMatrix<T>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid("design matrix needs at least one row"));
    }
    let mut k = Array2::<T>::zeros((n, n + 1));
    for i in 0..n {
        k[[i, 0]] = T::one();
        for j in 0..=i {
            let v = spec.eval(x.row(i), x.row(j));
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel { i, j });
            }
            k[[i, j + 1]] = v;
            k[[j, i + 1]] = v;
        }
    }
    Ok(DesignMatrix {
        k,
        spec: *spec,
        source_rows: Arc::new(x.clone()),
    })
}

/// `(1, k(x_new, x_1), ..., k(x_new, x_n))`.
pub fn prediction_row<T: Real>(spec: &KernelSpec, x_train: &Array2<T>, x_new: ArrayView1<T>) -> Result<Array1<T>> {
    if x_new.len() != x_train.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_train.ncols(),
            found: x_new.len(),
        });
    }
    let mut row = Array1::<T>::zeros(x_train.nrows() + 1);
    row[0] = T::one();
    for (j, xj) in x_train.axis_iter(Axis(0)).enumerate() {
        let v = spec.eval(x_new, xj);
        if !v.is_finite() {
            return Err(Error::NonFiniteKernel { i: 0, j });
        }
        row[j + 1] = v;
    }
    Ok(row)
}

/// Prediction rows for every row of `x_new`, stacked.
pub fn prediction_rows<T: Real>(spec: &KernelSpec, x_train: &Array2<T>, x_new: &Array2<T>) -> Result<Array2<T>> {
    let mut out = Array2::<T>::zeros((x_new.nrows(), x_train.nrows() + 1));
    for (i, row) in x_new.axis_iter(Axis(0)).enumerate() {
        out.row_mut(i).assign(&prediction_row(spec, x_train, row)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// Offending `(i, j)` pairs, 0-based, `i != j`.
    pub violations: Vec<(usize, usize)>,
}

/// A ratio within this distance of one counts as equal to one.
pub const RATIO_EQUALITY_TOL: f64 = 1e-12;
/// A diagonal entry with magnitude at or below this counts as zero.
pub const ZERO_DIAGONAL_TOL: f64 = 1e-300;

/// Checks `k_jj != 0` and `k_ij / k_jj != 1` for all `i != j` over the kernel
/// block (the intercept column is not part of the condition).
pub fn check_condition_iii<T: Real>(k: &DesignMatrix<T>) -> ConditionReport {
    let n = k.n();
    let mut violations = Vec::new();
    for j in 0..n {
        let kjj = k.kernel(j, j).as_f64();
        for i in 0..n {
            if i == j {
                continue;
            }
            let bad = kjj.abs() <= ZERO_DIAGONAL_TOL
                || (k.kernel(i, j).as_f64() / kjj - 1.0).abs() <= RATIO_EQUALITY_TOL;
            if bad {
                violations.push((i, j));
            }
        }
    }
    ConditionReport {
        holds: violations.is_empty(),
        violations,
    }
}

/// True iff the numeric rank of `K` (singular values above `tol` times the
/// largest) equals `n`.
pub fn check_full_row_rank<T: Real>(k: &DesignMatrix<T>, tol: T) -> bool {
    linalg::numeric_rank(k.view(), tol) == k.n()
}
