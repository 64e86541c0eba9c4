//! Scalar abstraction: the whole crate is generic over the working precision.
//!
//! `Real` is satisfied by `f32` and `f64`. Complex quantities use
//! [`nalgebra::Complex<T>`] on top of it.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical core is written against.
pub trait Real: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn fr<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

/// Complex number over the working scalar.
pub type C<T> = nalgebra::Complex<T>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_roundtrips() {
        let x: f32 = fr(0.25);
        assert_eq!(x, 0.25f32);
        let y: f64 = fr(1e-7);
        assert_eq!(y, 1e-7);
    }
}
