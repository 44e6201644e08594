//! Floating-point abstraction shared by the real-valued parts of the toolkit.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real scalar used for row profiles, cluster centroids and similar
/// intermediate quantities. Pixels themselves are always `u8`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    fn from_u64_lossy(v: u64) -> Self {
        Self::from_u64(v).expect("u64 is representable as a float")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable as a float")
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable as a float")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Round to nearest, ties away from zero, and clamp into the 8-bit range.
#[inline]
pub fn round_to_u8<T: Real>(v: T) -> u8 {
    let r = v.round();
    if r <= T::zero() {
        0
    } else if r >= T::from_u64_lossy(255) {
        255
    } else {
        r.to_u8().unwrap_or(0)
    }
}
