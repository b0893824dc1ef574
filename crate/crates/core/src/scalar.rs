//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar the shell model and its statistics are written over.
///
/// Implemented for `f32` and `f64`. All reference runs use `f64`: amplitudes in a
/// resolved viscous range span many decades and single precision underflows there.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the literal is not representable at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy widening used by file formats, which always store `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Wavenumber `k_n = 2^n`.
    #[inline]
    fn wavenumber(n: i32) -> Self {
        Self::lit(2.0).powi(n)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over a real scalar.
pub type Cx<T> = Complex<T>;

/// Multiplies by the imaginary unit without a full complex product.
#[inline]
pub(crate) fn times_i<T: Real>(z: Cx<T>) -> Cx<T> {
    Cx::new(-z.im, z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumbers_are_powers_of_two() {
        assert_eq!(f64::wavenumber(0), 1.0);
        assert_eq!(f64::wavenumber(3), 8.0);
        assert_eq!(f64::wavenumber(-2), 0.25);
        assert_eq!(f32::wavenumber(-1), 0.5);
    }

    #[test]
    fn times_i_matches_product() {
        let z = Cx::new(1.5f64, -0.25);
        assert_eq!(times_i(z), z * Cx::new(0.0, 1.0));
    }
}
