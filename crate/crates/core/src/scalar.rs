//! Scalar abstraction shared by the numeric modules (clustering, ranking).

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar accepted by the k-means and retrieval code.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an 8-bit channel value.
    fn from_channel(v: u8) -> Self {
        <Self as FromPrimitive>::from_u8(v).expect("u8 fits every float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
