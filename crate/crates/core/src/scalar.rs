//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type all matrix and diagnostic arithmetic is generic over.
///
/// The per-type tolerances bound the validation slack of row-stochastic
/// and zero-row-sum matrices; they scale with the mantissa width.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Absolute tolerance on row sums when validating stochastic
    /// (sum 1) and generator (sum 0) matrices.
    fn row_sum_tol() -> Self;

    /// Absolute tolerance used to verify that a computed matrix
    /// exponential is row-stochastic before renormalization.
    fn expm_verify_tol() -> Self;
}

/// Converts an f64 parameter (window length, configuration constant)
/// into the working scalar type. Panics on non-finite input.
pub fn lift<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite f64 converts to scalar")
}

/// Converts a nonnegative integer count into the working scalar type.
pub fn lift_count<F: Scalar>(x: u64) -> F {
    F::from_u64(x).expect("count converts to scalar")
}

impl Scalar for f64 {
    fn row_sum_tol() -> Self {
        1e-12
    }
    fn expm_verify_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn row_sum_tol() -> Self {
        1e-5
    }
    fn expm_verify_tol() -> Self {
        1e-4
    }
}
