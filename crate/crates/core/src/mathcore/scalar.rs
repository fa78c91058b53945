use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the numeric kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Gradient max-norm at which the logistic Newton solver stops.
    const SOLVER_TOLERANCE: f64;

    /// Smallest curvature value divided by when forming confidence widths.
    const CURVATURE_FLOOR: f64;

    fn of(x: f64) -> Self;

    fn half() -> Self {
        Self::of(0.5)
    }

    fn two() -> Self {
        Self::of(2.0)
    }
}

impl Real for f32 {
    const SOLVER_TOLERANCE: f64 = 1e-4;
    const CURVATURE_FLOOR: f64 = 1e-37;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    const SOLVER_TOLERANCE: f64 = 1e-10;
    const CURVATURE_FLOOR: f64 = 1e-300;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
}
