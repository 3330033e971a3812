//! Complex-capable scalar arithmetic.
//!
//! Every numerical kernel in this crate is generic over [`CsScalar`] so the
//! same code path can be evaluated over `f64` or over `Complex64`. The
//! complex instantiation follows the usual complex-step rules:
//!
//! * transposition never conjugates (we only ever use plain `transpose`),
//! * magnitude/ordering decisions look at real parts only,
//! * vector norms are the unconjugated `sqrt(sum z_i^2)` with the principal
//!   branch, so a small imaginary perturbation survives as a first-order
//!   signal instead of being destroyed by a Hermitian norm.

use nalgebra::{DVector, Scalar};
use num_complex::Complex64;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use thiserror::Error;

/// Arithmetic contract for scalars usable in complex-step differentiation.
///
/// Implemented for `f64` (ordinary real arithmetic) and [`Complex64`]
/// (first-order analytic extension). All transcendental functions use
/// principal branches.
pub trait CsScalar:
    Scalar
    + Copy
    + num_traits::Zero
    + num_traits::One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    fn from_real(r: f64) -> Self;

    /// Builds a scalar from real and imaginary parts. The `f64`
    /// implementation discards the imaginary part (callers only pass a
    /// nonzero one when instantiated over complex scalars).
    fn from_parts(re: f64, im: f64) -> Self;

    fn real(self) -> f64;

    fn imag(self) -> f64;

    /// Principal-branch square root.
    fn cs_sqrt(self) -> Self;

    fn cs_sin(self) -> Self;

    fn cs_cos(self) -> Self;

    /// Arc cosine on the principal branch. The real implementation clamps
    /// its argument into `[-1, 1]` so rounding noise on the trace of a
    /// rotation matrix cannot produce a NaN. The complex implementation is
    /// the first-order analytic extension around real interior points,
    /// `acos(x) - j y / sqrt(1 - x^2)`: library `acos` routines route tiny
    /// imaginary parts through log/modulus computations that absorb them
    /// into O(1) terms, destroying the complex-step signal.
    fn cs_acos(self) -> Self;

    /// Complex-step-safe absolute value: flips sign when the real part is
    /// negative, keeping the imaginary part attached to the branch.
    fn cs_abs(self) -> Self;

    fn cs_is_finite(self) -> bool;
}

impl CsScalar for f64 {
    #[inline]
    fn from_real(r: f64) -> Self {
        r
    }

    #[inline]
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    #[inline]
    fn real(self) -> f64 {
        self
    }

    #[inline]
    fn imag(self) -> f64 {
        0.0
    }

    #[inline]
    fn cs_sqrt(self) -> Self {
        self.sqrt()
    }

    #[inline]
    fn cs_sin(self) -> Self {
        self.sin()
    }

    #[inline]
    fn cs_cos(self) -> Self {
        self.cos()
    }

    #[inline]
    fn cs_acos(self) -> Self {
        self.clamp(-1.0, 1.0).acos()
    }

    #[inline]
    fn cs_abs(self) -> Self {
        self.abs()
    }

    #[inline]
    fn cs_is_finite(self) -> bool {
        self.is_finite()
    }
}

impl CsScalar for Complex64 {
    #[inline]
    fn from_real(r: f64) -> Self {
        Complex64::new(r, 0.0)
    }

    #[inline]
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    #[inline]
    fn real(self) -> f64 {
        self.re
    }

    #[inline]
    fn imag(self) -> f64 {
        self.im
    }

    #[inline]
    fn cs_sqrt(self) -> Self {
        self.sqrt()
    }

    #[inline]
    fn cs_sin(self) -> Self {
        self.sin()
    }

    #[inline]
    fn cs_cos(self) -> Self {
        self.cos()
    }

    #[inline]
    fn cs_acos(self) -> Self {
        let x = self.re.clamp(-1.0, 1.0);
        // Derivative of acos; infinite at the branch points, which callers
        // must avoid (the group logarithms use series near the identity and
        // reject angles at pi).
        Complex64::new(x.acos(), -self.im / (1.0 - x * x).sqrt())
    }

    #[inline]
    fn cs_abs(self) -> Self {
        if self.re < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn cs_is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Unconjugated dot product `sum a_i * b_i`.
pub fn dot_unconj<T: CsScalar>(a: &DVector<T>, b: &DVector<T>) -> T {
    assert_eq!(a.len(), b.len(), "dot_unconj: length mismatch");
    let mut acc = T::zero();
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Analytic vector "norm": principal-branch `sqrt(sum z_i^2)`, without
/// conjugation. Coincides with the Euclidean norm on real vectors.
pub fn norm_unconj<T: CsScalar>(v: &DVector<T>) -> T {
    dot_unconj(v, v).cs_sqrt()
}

/// Attempted `atan2` of two scalars whose real parts both vanish.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("atan2 undefined: both arguments have zero real part")]
pub struct Atan2Undefined;

/// First-order analytic extension of `atan2` around real points.
///
/// Returns `atan2(Re y, Re x) + j (Re x Im y - Re y Im x) / (Re x^2 + Re y^2)`.
/// Real-valued on real inputs; errors when both real parts are zero.
pub fn complexified_atan2<T: CsScalar>(y: T, x: T) -> Result<T, Atan2Undefined> {
    let (xr, yr) = (x.real(), y.real());
    if xr == 0.0 && yr == 0.0 {
        return Err(Atan2Undefined);
    }
    let re = yr.atan2(xr);
    let im = (xr * y.imag() - yr * x.imag()) / (xr * xr + yr * yr);
    Ok(T::from_parts(re, im))
}

/// Wraps an angle's real part into `(-pi, pi]`, leaving the imaginary part
/// untouched (adding a real constant does not change derivatives).
pub fn wrap_angle<T: CsScalar>(theta: T) -> T {
    let re = theta.real();
    let two_pi = std::f64::consts::TAU;
    let mut wrapped = re % two_pi;
    if wrapped > std::f64::consts::PI {
        wrapped -= two_pi;
    } else if wrapped <= -std::f64::consts::PI {
        wrapped += two_pi;
    }
    T::from_parts(wrapped, theta.imag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn atan2_trivial_points() {
        // (y, x) argument order matches f64::atan2.
        assert_eq!(complexified_atan2(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(complexified_atan2(1.0, 1.0).unwrap(), FRAC_PI_4);
    }

    #[test]
    fn atan2_first_order_extension() {
        // d/dy atan2(y, x) at (1, 1) is x / (x^2 + y^2) = 1/2.
        let h = 1e-20;
        let y = Complex64::new(1.0, h);
        let x = Complex64::new(1.0, 0.0);
        let z = complexified_atan2(y, x).unwrap();
        assert_relative_eq!(z.re, FRAC_PI_4);
        assert_relative_eq!(z.im, 0.5 * h, max_relative = 1e-15);
    }

    #[test]
    fn atan2_undefined_at_origin() {
        assert_eq!(complexified_atan2(0.0, 0.0), Err(Atan2Undefined));
        // Real parts zero but imaginary parts nonzero still errors.
        let z = Complex64::new(0.0, 1e-20);
        assert!(complexified_atan2(z, z).is_err());
    }

    #[test]
    fn unconjugated_norm_keeps_imaginary_signal() {
        // Hermitian norm of [1, j*h] would be sqrt(1 + h^2) (real); the
        // analytic norm must carry the perturbation.
        let h = 1e-8;
        let v = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, h)]);
        let n = norm_unconj(&v);
        // sqrt(1 - h^2) is real to first order with no imaginary part; now
        // perturb the first entry instead.
        assert_relative_eq!(n.re, (1.0 - h * h).sqrt(), max_relative = 1e-12);
        let w = DVector::from_vec(vec![Complex64::new(1.0, h), Complex64::new(2.0, 0.0)]);
        let nw = norm_unconj(&w);
        // d/dx sqrt(x^2 + 4) at x=1 is 1/sqrt(5).
        assert_relative_eq!(nw.im / h, 1.0 / 5.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn abs_flips_on_negative_real_part() {
        let z = Complex64::new(-2.0, 3e-21);
        let a = z.cs_abs();
        assert_eq!(a.re, 2.0);
        assert_eq!(a.im, -3e-21);
        assert_eq!((-1.5f64).cs_abs(), 1.5);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(-3.0 * PI), PI);
        assert_relative_eq!(wrap_angle(FRAC_PI_2), FRAC_PI_2);
        let z = wrap_angle(Complex64::new(2.0 * PI + 0.25, 1e-20));
        assert_relative_eq!(z.re, 0.25, epsilon = 1e-12);
        assert_eq!(z.im, 1e-20);
    }

    #[test]
    fn acos_clamps_real_rounding() {
        assert_eq!((1.0 + 1e-17f64).cs_acos(), 0.0);
        assert_relative_eq!((-1.0 - 1e-17f64).cs_acos(), PI);
    }
}
