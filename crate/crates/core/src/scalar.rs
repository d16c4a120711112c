//! Scalar abstraction: the whole library is generic over the real field used
//! for matrix entries, with `f64` as the working precision (see the aliases at
//! the crate root).

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable as the base field of states and operators.
///
/// Implemented by `f32` and `f64`. All invariant tolerances in this crate are
/// specified at `f64` precision and widened automatically for coarser types.
pub trait Real:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant not representable")
    }

    fn approx_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar not convertible to f64")
    }
}

impl<T> Real for T where
    T: RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
}

/// Modulus of a complex number over any [`Real`] scalar (the inherent
/// `Complex::norm` is only available for `num_traits::Float` types).
pub(crate) fn cnorm<T: Real>(z: num_complex::Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Numerical tolerance for a check whose nominal (f64) tolerance is `base`,
/// widened to `64 * dim * eps` when the scalar type cannot resolve `base`.
pub(crate) fn scaled_tol<T: Real>(base: f64, dim: usize) -> T {
    let floor = T::default_epsilon() * T::of(64.0 * dim as f64);
    let base = T::of(base);
    if base > floor {
        base
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_uses_spec_value_for_f64() {
        let t: f64 = scaled_tol(1e-10, 64);
        assert_eq!(t, 1e-10);
    }

    #[test]
    fn tolerance_widens_for_f32() {
        let t: f32 = scaled_tol(1e-10, 64);
        assert!(t > 1e-5 && t < 1e-2);
    }
}
