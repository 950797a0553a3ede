//! Scalar abstraction for the numeric estimation code.
//!
//! The recovery, fidelity and mitigation routines are written against
//! [`Real`] so they run in either `f32` or `f64`. Circuit angles and the
//! simulators stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant, panicking only on types that cannot hold it.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Maps an angle onto `(-π, π]`.
pub fn wrap_angle<F: Real>(theta: F) -> F {
    let two_pi = F::TAU();
    let mut t = theta % two_pi;
    if t <= -F::PI() {
        t += two_pi;
    } else if t > F::PI() {
        t -= two_pi;
    }
    t
}
