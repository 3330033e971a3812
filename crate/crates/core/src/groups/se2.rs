//! SE(2) closed-form exponential and logarithm.

use crate::scalar::{complexified_atan2, CsScalar};
use nalgebra::DMatrix;

use super::so3::{cos_ratio, sinc};
use super::GroupError;

/// `exp([phi, r1, r2]^wedge)`: rotation by `phi` with translation
/// `J(phi) [r1, r2]` where `J` is the planar left Jacobian.
pub(crate) fn exp<T: CsScalar>(phi: T, r1: T, r2: T) -> DMatrix<T> {
    let (s, c) = (phi.cs_sin(), phi.cs_cos());
    // a = sin(phi)/phi, b = (1 - cos(phi))/phi, both series-guarded.
    let a = sinc(phi);
    let b = phi * cos_ratio(phi);
    let mut m = DMatrix::from_element(3, 3, T::zero());
    m[(0, 0)] = c;
    m[(0, 1)] = -s;
    m[(1, 0)] = s;
    m[(1, 1)] = c;
    m[(0, 2)] = a * r1 - b * r2;
    m[(1, 2)] = b * r1 + a * r2;
    m[(2, 2)] = T::one();
    m
}

/// Logarithm via the complexified `atan2`; well conditioned on the whole
/// group (the planar left Jacobian stays invertible at `phi = pi`).
pub(crate) fn log<T: CsScalar>(m: &DMatrix<T>) -> Result<Vec<T>, GroupError> {
    let phi = complexified_atan2(m[(1, 0)], m[(0, 0)]).map_err(|_| GroupError::InvalidElement {
        kind: "SE(2)".into(),
        detail: "rotation block has zero first column".into(),
    })?;
    let a = sinc(phi);
    let b = phi * cos_ratio(phi);
    // inv([[a, -b], [b, a]]) = [[a, b], [-b, a]] / (a^2 + b^2)
    let det = a * a + b * b;
    let (x, y) = (m[(0, 2)], m[(1, 2)]);
    let r1 = (a * x + b * y) / det;
    let r2 = (a * y - b * x) / det;
    Ok(vec![phi, r1, r2])
}
