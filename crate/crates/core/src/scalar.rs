//! Floating-point abstraction for the weight math.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the model math is generic over: `f32` or `f64`.
///
/// Snapshots are stored and transported as 64-bit floats regardless of the
/// in-memory scalar; converting through `f64` is lossless for both
/// implementors.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("f64 conversion is total for float scalars")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion is total for float scalars")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
