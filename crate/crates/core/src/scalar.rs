//! Scalar abstraction shared by every stage of the pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the pipeline is generic over.
///
/// Geometry, flows and sketches are all computed in `T`. The solver was
/// tuned for `f64`; `f32` works for small instances but loses accuracy in
/// the multiplicative-weights stages.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (constants, parsed values).
    fn of(x: f64) -> Self;

    /// Conversion from a count or index.
    fn of_usize(x: usize) -> Self {
        Self::of(x as f64)
    }

    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Euclidean distance between two coordinate slices of equal length.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Sum of absolute values.
pub fn l1_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).sum()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
