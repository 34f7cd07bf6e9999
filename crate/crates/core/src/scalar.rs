//! Floating-point scalar abstraction for embedding vectors.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Element type of embedding vectors: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Default
    + Debug
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Allowed deviation of an embedding's norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Norm accumulated in `f64` regardless of `T`.
pub fn l2_norm_f64<T: Scalar>(v: &[T]) -> f64 {
    v.iter()
        .map(|x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Scales `v` to unit length in place; returns `false` (leaving `v` untouched)
/// when its norm is not strictly positive.
pub fn normalize<T: Scalar>(v: &mut [T]) -> bool {
    let n = l2_norm_f64(v);
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = T::from_f64_lossy(x.to_f64_lossy() / n);
    }
    true
}

pub fn is_unit<T: Scalar>(v: &[T]) -> bool {
    (l2_norm_f64(v) - 1.0).abs() <= UNIT_NORM_TOLERANCE
}
