//! Scalar abstraction for the geometric parts of the engine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the camera math: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let tau = T::TAU();
    let mut r = a % tau;
    if r < T::zero() {
        r = r + tau;
    }
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_signed<T: Scalar>(a: T) -> T {
    let r = wrap_angle(a);
    if r > T::PI() {
        r - T::TAU()
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for k in -50..50 {
            let a = k as f64 * 0.37;
            let w = wrap_angle(a);
            assert!((0.0..std::f64::consts::TAU).contains(&w));
            let s = wrap_signed(a);
            assert!(s > -std::f64::consts::PI && s <= std::f64::consts::PI);
        }
        assert_eq!(wrap_angle(-1e-18_f64), 0.0);
    }
}
