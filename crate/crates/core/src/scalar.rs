//! Scalar abstraction shared by the probability code.
//!
//! World weighting and linkage only need field arithmetic, so they run over any
//! [`Scalar`], including exact rationals. The solver needs `sqrt`/`abs`-style
//! float operations and is bound by [`Real`] instead.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Numeric type usable as a probability.
pub trait Scalar:
    Num + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Exact types never underflow, so they skip the log-space path.
    const EXACT: bool;

    /// Absolute tolerance used when comparing values that should be equal.
    fn tolerance() -> Self;

    fn from_ratio(num: usize, den: usize) -> Self {
        Self::from_usize(num).expect("count fits in scalar")
            / Self::from_usize(den).expect("count fits in scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite value representable in scalar")
    }

    fn abs_diff(self, other: Self) -> Self {
        if self > other {
            self - other
        } else {
            other - self
        }
    }

    fn approx_eq(self, other: Self) -> bool {
        self.abs_diff(other) <= Self::tolerance()
    }
}

/// Floating-point scalar: f32 or f64.
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;
    fn tolerance() -> Self {
        1e-5
    }
}

impl Real for f64 {}
impl Real for f32 {}

impl Scalar for Ratio<i64> {
    const EXACT: bool = true;
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}

impl Scalar for Ratio<i128> {
    const EXACT: bool = true;
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}
