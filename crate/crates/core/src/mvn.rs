//! Multivariate normal draws parameterized by a precision matrix.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::linalg::Cholesky;
use crate::real::Real;

/// `N(Q^{-1} h, Q^{-1})` given the factor of the precision `Q`.
///
/// With `Q = L L^T` the draw is `Q^{-1} h + L^{-T} z`, `z ~ N(0, I)`.
pub fn sample_canonical<T: Real, R: Rng + ?Sized>(chol: &Cholesky<T>, h: ArrayView1<T>, rng: &mut R) -> Array1<T> {
    let mean = chol.solve(h);
    let z: Array1<T> = (0..chol.dim()).map(|_| T::sample_standard_normal(rng)).collect();
    mean + chol.solve_upper(z.view())
}

/// `Q^{-1} h` and `Q^{-1}`, for closed-form checks.
pub fn canonical_moments<T: Real>(chol: &Cholesky<T>, h: ArrayView1<T>) -> (Array1<T>, Array2<T>) {
    (chol.solve(h), chol.inverse())
}
