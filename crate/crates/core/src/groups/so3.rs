//! SO(3) kernels shared by the 3-D pose groups: Rodrigues exponential,
//! acos-based logarithm, and the left Jacobian with its closed-form inverse.
//!
//! All trig-ratio coefficients are guarded near zero rotation by 4-term
//! Maclaurin series in `phi^2`, which keeps every map analytic in a complex
//! neighborhood of the identity so the complex-step signal survives the
//! removable singularities.

use crate::scalar::CsScalar;
use nalgebra::{Matrix3, Vector3};

use super::GroupError;

/// Threshold on |Re(phi)| below which sinc-family ratios switch to series.
/// (SO(3) angles from the principal square root have Re >= 0; the SE(2)
/// heading coordinate can be negative, and every guarded ratio is even.)
pub(crate) const SMALL_ANGLE: f64 = 1e-6;

/// Angles whose real part is within this distance of pi are rejected by the
/// acos-based logarithm.
pub(crate) const ANGLE_AT_PI_MARGIN: f64 = 1e-9;

#[inline]
pub(crate) fn skew<T: CsScalar>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v[2], v[1], v[2], z, -v[0], -v[1], v[0], z)
}

#[inline]
pub(crate) fn unskew<T: CsScalar>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Unconjugated rotation angle: principal `sqrt(phi . phi)`.
#[inline]
pub(crate) fn rotation_angle<T: CsScalar>(phi: &Vector3<T>) -> T {
    (phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]).cs_sqrt()
}

/// `sin(phi)/phi`, series-guarded.
pub(crate) fn sinc<T: CsScalar>(phi: T) -> T {
    if phi.real().abs() < SMALL_ANGLE {
        let x = phi * phi;
        T::from_real(1.0) - x / T::from_real(6.0) + x * x / T::from_real(120.0)
            - x * x * x / T::from_real(5040.0)
    } else {
        phi.cs_sin() / phi
    }
}

/// `(1 - cos(phi))/phi^2`, series-guarded. The closed form uses
/// `1 - cos(phi) = 2 sin^2(phi/2)`, which has no subtractive cancellation
/// near the guard boundary.
pub(crate) fn cos_ratio<T: CsScalar>(phi: T) -> T {
    if phi.real().abs() < SMALL_ANGLE {
        let x = phi * phi;
        T::from_real(0.5) - x / T::from_real(24.0) + x * x / T::from_real(720.0)
            - x * x * x / T::from_real(40320.0)
    } else {
        let s = (phi * T::from_real(0.5)).cs_sin();
        s * s * T::from_real(2.0) / (phi * phi)
    }
}

/// `(phi - sin(phi))/phi^3`, series-guarded.
pub(crate) fn sin_ratio<T: CsScalar>(phi: T) -> T {
    if phi.real().abs() < SMALL_ANGLE {
        let x = phi * phi;
        T::from_real(1.0 / 6.0) - x / T::from_real(120.0) + x * x / T::from_real(5040.0)
            - x * x * x / T::from_real(362_880.0)
    } else {
        (phi - phi.cs_sin()) / (phi * phi * phi)
    }
}

/// Coefficient of the skew-squared term in the inverse left Jacobian:
/// `1/phi^2 - (1 + cos phi) / (2 phi sin phi)`, series-guarded.
pub(crate) fn jacobian_inv_ratio<T: CsScalar>(phi: T) -> T {
    if phi.real().abs() < SMALL_ANGLE {
        let x = phi * phi;
        T::from_real(1.0 / 12.0) + x / T::from_real(720.0) + x * x / T::from_real(30240.0)
            + x * x * x / T::from_real(1_209_600.0)
    } else {
        let x = phi * phi;
        let half_sin = (phi * T::from_real(0.5)).cs_sin();
        (T::one() - phi * phi.cs_sin() / (half_sin * half_sin * T::from_real(4.0))) / x
    }
}

/// `theta / (2 sin theta)` as a series in `theta^2`; the scale applied to
/// the skew part of a rotation matrix in the small-angle logarithm.
fn log_ratio_from_theta_sq<T: CsScalar>(theta_sq: T) -> T {
    let x = theta_sq;
    T::from_real(0.5) + x / T::from_real(12.0) + x * x * T::from_real(7.0 / 720.0)
        + x * x * x * T::from_real(31.0 / 30240.0)
}

/// Rodrigues formula: `exp(phi^x) = 1 + sinc(phi) phi^x + cos_ratio(phi) (phi^x)^2`.
pub(crate) fn exp<T: CsScalar>(phi: &Vector3<T>) -> Matrix3<T> {
    let angle = rotation_angle(phi);
    let k = skew(phi);
    let k2 = k * k;
    Matrix3::identity() + k * sinc(angle) + k2 * cos_ratio(angle)
}

/// Left Jacobian of SO(3): `1 + cos_ratio(phi) phi^x + sin_ratio(phi) (phi^x)^2`.
pub(crate) fn left_jacobian<T: CsScalar>(phi: &Vector3<T>) -> Matrix3<T> {
    let angle = rotation_angle(phi);
    let k = skew(phi);
    let k2 = k * k;
    Matrix3::identity() + k * cos_ratio(angle) + k2 * sin_ratio(angle)
}

/// Closed-form inverse of the SO(3) left Jacobian.
pub(crate) fn left_jacobian_inv<T: CsScalar>(phi: &Vector3<T>) -> Matrix3<T> {
    let angle = rotation_angle(phi);
    let k = skew(phi);
    let k2 = k * k;
    Matrix3::identity() - k * T::from_real(0.5) + k2 * jacobian_inv_ratio(angle)
}

/// acos-based logarithm: the angle comes from `acos((tr C - 1)/2)` and the
/// axis from the skew part. Errors when the rotation angle's real part is
/// within [`ANGLE_AT_PI_MARGIN`] of pi, where the principal logarithm is
/// ill conditioned.
///
/// Near the identity the angle is recovered from the trace deficit
/// `u = (3 - tr C)/2 = 1 - cos(theta)` through the series
/// `theta^2 = 2u + u^2/3 + 4u^3/45`, avoiding acos entirely: acos is not
/// differentiable at its branch point, so the closed form cannot carry a
/// complex-step signal through the identity.
pub(crate) fn log<T: CsScalar>(c: &Matrix3<T>) -> Result<Vector3<T>, GroupError> {
    let tr = c[(0, 0)] + c[(1, 1)] + c[(2, 2)];
    let u = (T::from_real(3.0) - tr) * T::from_real(0.5);
    // u = 1 - cos(theta); the guard Re(theta) < SMALL_ANGLE becomes
    // Re(u) < SMALL_ANGLE^2 / 2.
    let scale = if u.real() < 0.5 * SMALL_ANGLE * SMALL_ANGLE {
        let theta_sq =
            u * T::from_real(2.0) + u * u / T::from_real(3.0) + u * u * u * T::from_real(4.0 / 45.0);
        log_ratio_from_theta_sq(theta_sq)
    } else {
        let arg = (tr - T::one()) * T::from_real(0.5);
        let theta = arg.cs_acos();
        if theta.real() > std::f64::consts::PI - ANGLE_AT_PI_MARGIN {
            return Err(GroupError::AngleAtPi {
                angle: theta.real(),
            });
        }
        theta / (theta.cs_sin() * T::from_real(2.0))
    };
    let skew_part = c - c.transpose();
    Ok(unskew(&skew_part) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let c = exp(&Vector3::<f64>::zeros());
        assert_eq!(c, Matrix3::identity());
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let c = exp(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert_relative_eq!(c[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(c[(0, 1)], -1.0, epsilon = 1e-15);
        assert_relative_eq!(c[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c[(2, 2)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn log_exp_roundtrip() {
        let phi = Vector3::new(0.3, -0.8, 0.5);
        let back = log(&exp(&phi)).unwrap();
        assert_relative_eq!(back, phi, epsilon = 1e-12);
    }

    #[test]
    fn log_rejects_angle_pi() {
        let c = exp(&Vector3::new(PI - 1e-12, 0.0, 0.0));
        assert!(matches!(log(&c), Err(GroupError::AngleAtPi { .. })));
    }

    #[test]
    fn jacobian_inverse_is_inverse() {
        let phi = Vector3::new(0.7, 0.2, -1.1);
        let j = left_jacobian(&phi);
        let jinv = left_jacobian_inv(&phi);
        let prod = j * jinv;
        assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-13);
    }

    #[test]
    fn series_matches_closed_form_at_threshold() {
        // Straddle the 1e-6 guard; both branches must agree well inside f64.
        for &a in &[9.9e-7, 1.1e-6] {
            let phi = Vector3::new(a, 0.0, 0.0);
            let j = left_jacobian(&phi);
            let jinv = left_jacobian_inv(&phi);
            assert_relative_eq!(j * jinv, Matrix3::identity(), epsilon = 1e-14);
        }
        // Scalar ratios straddling the guard.
        assert_relative_eq!(sinc(9.9e-7_f64), sinc(1.00000001e-6), epsilon = 1e-12);
    }

    #[test]
    fn complex_step_through_exp_matches_generator() {
        // Im{exp(j h e_i)} / h should be the skew generator itself.
        let h = 1e-20;
        for i in 0..3 {
            let mut phi = Vector3::new(c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0));
            phi[i] = c64(0.0, h);
            let c = exp(&phi);
            let mut gen = Matrix3::zeros();
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            gen.copy_from(&skew(&e));
            for r in 0..3 {
                for s in 0..3 {
                    assert_relative_eq!(c[(r, s)].im / h, gen[(r, s)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn complex_log_recovers_imaginary_tangent() {
        let h = 1e-20;
        let phi = Vector3::new(c64(0.0, h), c64(0.0, 0.0), c64(0.0, 0.0));
        let c = exp(&phi);
        let back = log(&c).unwrap();
        assert_relative_eq!(back[0].im, h, max_relative = 1e-12);
        assert!(back[0].re.abs() < 1e-30);
    }
}
