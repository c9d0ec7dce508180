//! Scalar abstraction: all field arithmetic is generic over the real type.
//!
//! `f64` is the working precision (the tolerances in the test suite assume
//! it); `f32` instantiates for cheap smoke runs.

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Real scalar usable for grid fields: float arithmetic plus FFT support.
pub trait Scalar: Float + FftNum + FromPrimitive + NumAssign {}

impl<T: Float + FftNum + FromPrimitive + NumAssign> Scalar for T {}

/// Complex value over the working scalar.
pub type Cplx<T> = Complex<T>;

/// Lift an `f64` constant into the working scalar.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// Complex constant from `f64` parts.
#[inline]
pub fn cplx<T: Scalar>(re: f64, im: f64) -> Cplx<T> {
    Complex::new(real(re), real(im))
}

/// i as a complex scalar.
#[inline]
pub fn imag_unit<T: Scalar>() -> Cplx<T> {
    Complex::new(T::zero(), T::one())
}

/// 2π in the working scalar.
#[inline]
pub fn two_pi<T: Scalar>() -> T {
    real(std::f64::consts::TAU)
}
