//! Scalar abstraction for the distance math.
//!
//! Graph construction and search are agnostic to the float width; the remote
//! byte formats pin vectors to little-endian `f32`. Everything above the codec
//! is generic over [`Scalar`], with `f32` aliases exported at the crate root.

use crate::error::{Error, Result};

/// Floating-point scalar usable as a vector component.
pub trait Scalar:
    num_traits::float::FloatCore
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Squared Euclidean distance. Chosen over plain L2 because it is
/// argmin-equivalent and avoids the square root.
pub fn squared_l2<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(squared_l2_unchecked(a, b))
}

/// Same as [`squared_l2`] without the dimension check, for callers that have
/// already validated dims on entry.
#[inline]
pub fn squared_l2_unchecked<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc = acc + d * d;
    }
    acc
}
