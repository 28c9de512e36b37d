//! Dense linear algebra over [`Real`]: Cholesky with jitter escalation,
//! triangular solves, Jacobi eigenvalues and singular values.
//!
//! Matrices here are at most a few hundred rows (the design matrix is
//! `n x (n+1)` for `n` training points), so straightforward O(n^3) kernels
//! are sufficient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::real::Real;

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
    /// Diagonal jitter that was added to make the factorization succeed.
    pub jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix. Only the lower triangle
    /// of `a` is read. Returns `None` if a pivot is not strictly positive.
    pub fn new(a: ArrayView2<T>) -> Option<Self> {
        Self::with_shift(a, T::zero())
    }

    fn with_shift(a: ArrayView2<T>, shift: T) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "cholesky of a non-square matrix");
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]] + shift;
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Some(Cholesky { l, jitter: shift })
    }

    /// Factors with the escalation policy used by both samplers: plain
    /// attempt, then jitter `1e-10 * trace / dim` growing by 10x up to three
    /// times. Returns the eigenvalue condition estimate on failure.
    pub fn with_jitter(a: ArrayView2<T>) -> Result<Self, f64> {
        if let Some(c) = Self::new(a) {
            return Ok(c);
        }
        let n = a.nrows();
        let trace: T = a.diag().iter().copied().sum();
        let mut jitter = T::lit(1e-10) * trace.abs() / T::from_usize(n.max(1)).unwrap();
        for _ in 0..3 {
            if let Some(c) = Self::with_shift(a, jitter) {
                log::warn!("cholesky needed diagonal jitter {:e}", jitter.as_f64());
                return Ok(c);
            }
            jitter *= T::lit(10.0);
        }
        Err(condition_estimate(a))
    }

    pub fn factor(&self) -> &Array2<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        let mut x = b.to_owned();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[[i, k]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        x
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        let mut x = b.to_owned();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<T>) -> Array1<T> {
        let z = self.solve_lower(b);
        self.solve_upper(z.view())
    }

    pub fn solve_matrix(&self, b: ArrayView2<T>) -> Array2<T> {
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.axis_iter(Axis(1)).enumerate() {
            out.column_mut(j).assign(&self.solve(col));
        }
        out
    }

    pub fn inverse(&self) -> Array2<T> {
        self.solve_matrix(Array2::eye(self.dim()).view())
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.l.diag().iter().map(|d| two * d.ln()).sum()
    }
}

fn condition_estimate<T: Real>(a: ArrayView2<T>) -> f64 {
    let eig = symmetric_eigenvalues(a);
    let max = eig.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `A^T A`.
pub fn gram<T: Real>(a: ArrayView2<T>) -> Array2<T> {
    a.t().dot(&a)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: ArrayView2<T>) -> Vec<T> {
    symmetric_eigen(a).0.to_vec()
}

/// Eigenvalues (ascending) and matching eigenvectors (as columns) of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let v = m[[i, j]] * m[[i, j]];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[[x, x]].partial_cmp(&m[[y, y]]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::<T>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

/// Singular values of `a` (descending) by one-sided Jacobi orthogonalization.
///
/// Works on whichever of `a`, `a^T` has fewer columns; returns
/// `min(rows, cols)` values.
pub fn singular_values<T: Real>(a: ArrayView2<T>) -> Vec<T> {
    let mut u = if a.ncols() <= a.nrows() {
        a.to_owned()
    } else {
        a.t().to_owned()
    };
    let cols = u.ncols();
    let rows = u.nrows();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for k in 0..rows {
                    alpha += u[[k, p]] * u[[k, p]];
                    beta += u[[k, q]] * u[[k, q]];
                    gamma += u[[k, p]] * u[[k, q]];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let ukp = u[[k, p]];
                    let ukq = u[[k, q]];
                    u[[k, p]] = c * ukp - s * ukq;
                    u[[k, q]] = s * ukp + c * ukq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..cols)
        .map(|j| u.column(j).iter().map(|v| *v * *v).sum::<T>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Numeric rank: number of singular values above `tol * max singular value`.
pub fn numeric_rank<T: Real>(a: ArrayView2<T>, tol: T) -> usize {
    let sv = singular_values(a);
    let Some(&max) = sv.first() else { return 0 };
    if max == T::zero() {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * max).count()
}
