//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the library is generic over.
///
/// Validation tolerances scale with the type: contracts stated at `1e-10`
/// hold for `f64`; the `f32` instantiation uses `1e-5` since single
/// precision cannot represent tighter unit/orthogonality residuals.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Accepted deviation from unit norm / exact orthogonality.
    const UNIT_TOL: Self;

    /// Lossless-enough conversion from an `f64` intermediate.
    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Widen to `f64` for accumulation or reporting.
    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    const UNIT_TOL: Self = 1e-5;
}

impl Scalar for f64 {
    const UNIT_TOL: Self = 1e-10;
}

/// Squared Euclidean distance.
///
/// Eight independent accumulators so the float adds pipeline instead of
/// forming one latency chain (the compiler may not reassociate float
/// reductions on its own).
#[inline]
pub fn l2_sq<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for j in 0..8 {
            let d = ca[j] - cb[j];
            acc[j] = acc[j] + d * d;
        }
    }
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder().iter()) {
        let d = x - y;
        acc[0] = acc[0] + d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Dot product, unrolled like [`l2_sq`].
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for j in 0..8 {
            acc[j] = acc[j] + ca[j] * cb[j];
        }
    }
    for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder().iter()) {
        acc[0] = acc[0] + x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Euclidean norm, accumulated in the scalar type.
#[inline]
pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Cast a slice between scalar types through `f64`.
pub fn cast_slice<A: Scalar, B: Scalar>(a: &[A]) -> Vec<B> {
    a.iter().map(|&x| B::from_f64_lossy(x.widen())).collect()
}
