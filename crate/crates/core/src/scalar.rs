//! The scalar abstraction shared by plain evaluation and gradient tracking.
//!
//! All forward math in this crate is written once, generically over [`Real`].
//! Instantiated at `f64` it is a plain evaluation (used for inference, ranking
//! and the finite-difference oracle); instantiated at [`crate::tape::Var`] the
//! same expressions record a computation graph for reverse-mode gradients.
//! Both instantiations execute identical floating-point operations, so primal
//! values agree bit for bit.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Primal value.
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn relu(self) -> Self;
    fn sigmoid(self) -> Self;

    /// `min(self, cap)`; the capped branch carries zero derivative.
    fn clamp_max(self, cap: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }

    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }

    #[inline]
    fn relu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }

    #[inline]
    fn sigmoid(self) -> f64 {
        sigmoid_stable(self)
    }

    #[inline]
    fn clamp_max(self, cap: f64) -> f64 {
        if self > cap {
            cap
        } else {
            self
        }
    }
}

/// Overflow-free logistic function: splits on the sign of `x` so the
/// exponential argument is never positive.
#[inline]
pub fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
