//! Field abstraction letting the dense kernels run over either `f64` or
//! `Complex64`: probability propagators are real, wave propagators complex,
//! and there is no reason to pay complex arithmetic on the real paths.

use ndarray::LinalgScalar;
use num_complex::Complex64;
use std::fmt::{Debug, Display};
use std::ops::Neg;

pub trait Scalar: LinalgScalar + Neg<Output = Self> + PartialEq + Debug + Display {
    fn from_f64(value: f64) -> Self;
    /// Modulus |z| (absolute value for reals).
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    fn is_finite(self) -> bool;

    #[inline]
    fn scale(self, factor: f64) -> Self {
        self * Self::from_f64(factor)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }

    #[inline]
    fn conj(self) -> Self {
        self
    }

    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn from_f64(value: f64) -> Self {
        Complex64::new(value, 0.0)
    }

    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }

    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_modulus_and_conjugate() {
        let z = Complex64::new(3.0, -4.0);
        assert_eq!(z.modulus(), 5.0);
        assert_eq!(Scalar::conj(z), Complex64::new(3.0, 4.0));
    }

    #[test]
    fn real_conjugate_is_identity() {
        assert_eq!(Scalar::conj(-2.5f64), -2.5);
        assert_eq!((-2.5f64).modulus(), 2.5);
    }
}
