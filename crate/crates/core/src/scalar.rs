//! Floating-point abstraction shared by every model.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar type the models are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or RNG draw.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Logistic sigmoid, evaluated in the numerically stable branch and kept
    /// strictly inside `(0, 1)`: saturated inputs map to the nearest
    /// representable values instead of rounding onto the bounds.
    #[inline]
    fn sigmoid(self) -> Self {
        let s = if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        };
        if s.is_nan() {
            return s;
        }
        let top = Self::one() - Self::epsilon() * Self::of(0.5);
        s.max(Self::min_positive_value()).min(top)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
