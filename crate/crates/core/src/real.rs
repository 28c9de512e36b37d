//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All linear algebra, kernels, samplers and estimators are written against
//! [`Real`], which is implemented for `f32` and `f64`. Special functions are
//! evaluated in `f64` and narrowed back, since the `f32` path is only meant
//! for memory-light kernel and diagnostic work.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Gamma(shape, rate). `None` when the parameters are not
    /// strictly positive and finite.
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Option<Self>;

    fn lgamma(self) -> Self {
        Self::lit(statrs::function::gamma::ln_gamma(self.as_f64()))
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn sample_gamma<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Option<Self> {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return None;
                }
                // rand_distr parameterizes by scale.
                let dist = Gamma::new(shape, 1.0 / rate).ok()?;
                Some(dist.sample(rng))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
