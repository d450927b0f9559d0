//! Scalar primitives shared by the graph ops and the loss code.

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::usage("softmax of an empty vector"));
    }
    let mut out = vec![T::zero(); scores.len()];
    softmax_into(scores, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into<T: Real>(scores: &[T], out: &mut [T]) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Smooth L1: `0.5 x²` for `|x| < 1`, `|x| - 0.5` otherwise.
pub fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::of(0.5) * x * x
    } else {
        a - T::of(0.5)
    }
}

pub(crate) fn smooth_l1_grad<T: Real>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
