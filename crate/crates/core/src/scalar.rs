//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the pipeline is generic over: `f32` or `f64`.
///
/// Shape functions, tanh activations and the sigmoid head need transcendental
/// functions, so exact/rational types are not admissible here.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid, evaluated in the numerically stable branch for each sign.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_bounded() {
        for &z in &[-40.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0 || z.abs() > 30.0);
            assert!((s + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0f32), 0.5);
    }
}
