use super::*;
use crate::selftest::matrix_exp_series;
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn rng() -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(0xc0ffee)
}

fn random_tangent(rng: &mut ChaCha12Rng, kind: GroupKind, scale: f64) -> TangentVector<f64> {
    let coords = DVector::from_fn(kind.dof(), |_, _| rng.random_range(-scale..scale));
    TangentVector::from_coords(kind, coords).unwrap()
}

fn random_element(rng: &mut ChaCha12Rng, kind: GroupKind, scale: f64) -> GroupElement<f64> {
    random_tangent(rng, kind, scale).exp()
}

#[test]
fn kind_dimensions() {
    assert_eq!(GroupKind::So3.dof(), 3);
    assert_eq!(GroupKind::Se2.dof(), 3);
    assert_eq!(GroupKind::Se3.dof(), 6);
    assert_eq!(GroupKind::Se23.dof(), 9);
    assert_eq!(GroupKind::So3.dim(), 3);
    assert_eq!(GroupKind::Se2.dim(), 3);
    assert_eq!(GroupKind::Se3.dim(), 4);
    assert_eq!(GroupKind::Se23.dim(), 5);
    let comp = GroupKind::Composite(vec![GroupKind::Se2, GroupKind::Se23]);
    assert_eq!(comp.dof(), 12);
    assert_eq!(comp.dim(), 8);
}

#[test]
fn wedge_zero_se3() {
    let xi = TangentVector::<f64>::zero(GroupKind::Se3);
    assert_eq!(xi.wedge(), DMatrix::zeros(4, 4));
}

#[test]
fn wedge_se2_layout() {
    let (a, b, c) = (0.4, -1.2, 2.5);
    let xi = TangentVector::from_coords(GroupKind::Se2, DVector::from_vec(vec![a, b, c])).unwrap();
    let m = xi.wedge();
    let expected =
        DMatrix::from_row_slice(3, 3, &[0.0, -a, b, a, 0.0, c, 0.0, 0.0, 0.0]);
    assert_eq!(m, expected);
}

#[test]
fn wedge_se23_layout() {
    let xi = TangentVector::from_coords(
        GroupKind::Se23,
        DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
    )
    .unwrap();
    let m = xi.wedge();
    assert_eq!(m.view((0, 0), (3, 3)).amax(), 0.0);
    assert_eq!(m[(0, 3)], 1.0);
    assert_eq!(m[(1, 3)], 2.0);
    assert_eq!(m[(2, 3)], 3.0);
    assert_eq!(m[(0, 4)], 4.0);
    assert_eq!(m[(1, 4)], 5.0);
    assert_eq!(m[(2, 4)], 6.0);
    assert_eq!(m.view((3, 0), (2, 5)).amax(), 0.0);
}

#[test]
fn wedge_rejects_dimension_mismatch() {
    let err = TangentVector::<f64>::from_coords(GroupKind::Se3, DVector::zeros(5)).unwrap_err();
    assert!(matches!(err, GroupError::DimensionMismatch { .. }));
}

#[test]
fn vee_inverts_wedge() {
    let mut rng = rng();
    for kind in [GroupKind::So3, GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        let xi = random_tangent(&mut rng, kind.clone(), 2.0);
        let back = vee(&xi.wedge(), &kind).unwrap();
        assert_eq!(back.coords(), xi.coords());
    }
}

#[test]
fn vee_zero_matrix_is_zero_vector() {
    let z = DMatrix::<f64>::zeros(3, 3);
    let xi = vee(&z, &GroupKind::Se2).unwrap();
    assert_eq!(xi.coords(), &DVector::zeros(3));
}

#[test]
fn vee_rejects_pattern_violation() {
    let mut m = DMatrix::<f64>::zeros(4, 4);
    m[(3, 0)] = 1e-6; // bottom row must vanish
    assert!(matches!(
        vee(&m, &GroupKind::Se3),
        Err(GroupError::AlgebraPattern { .. })
    ));
    let mut m = DMatrix::<f64>::zeros(3, 3);
    m[(0, 1)] = 0.5;
    m[(1, 0)] = 0.5; // not skew
    assert!(vee(&m, &GroupKind::So3).is_err());
}

#[test]
fn vee_roundtrips_imaginary_parts() {
    // wedge then vee on j*h*e_i keeps the imaginary signal intact.
    let h = 1e-20;
    for kind in [GroupKind::So3, GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        for i in 0..kind.dof() {
            let xi =
                TangentVector::<Complex64>::basis(kind.clone(), i, Complex64::new(0.0, h));
            let back = vee(&xi.wedge(), &kind).unwrap();
            for k in 0..kind.dof() {
                let expected = if k == i { h } else { 0.0 };
                assert_eq!(back.coords()[k].im, expected);
                assert_eq!(back.coords()[k].re, 0.0);
            }
        }
    }
}

#[test]
fn exp_zero_is_identity() {
    for kind in [GroupKind::So3, GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        let x = TangentVector::<f64>::zero(kind.clone()).exp();
        assert_eq!(x.matrix(), DMatrix::identity(kind.dim(), kind.dim()));
    }
}

#[test]
#[allow(clippy::approx_constant)] // 0.63662 is the frozen expected value
fn exp_se2_quarter_turn() {
    // Frozen from the truncated matrix-exponential series oracle.
    let xi = TangentVector::from_coords(
        GroupKind::Se2,
        DVector::from_vec(vec![FRAC_PI_2, 1.0, 0.0]),
    )
    .unwrap();
    let m = xi.exp().matrix();
    let series = matrix_exp_series(&xi.wedge(), 30);
    assert_relative_eq!(m, series, epsilon = 1e-12);
    assert_relative_eq!(m[(0, 0)], 0.0, epsilon = 1e-15);
    assert_relative_eq!(m[(0, 1)], -1.0, epsilon = 1e-15);
    assert_relative_eq!(m[(1, 0)], 1.0, epsilon = 1e-15);
    let two_over_pi = 2.0 / PI;
    assert_relative_eq!(m[(0, 2)], two_over_pi, epsilon = 1e-12);
    assert_relative_eq!(m[(1, 2)], two_over_pi, epsilon = 1e-12);
    assert_relative_eq!(m[(0, 2)], 0.63662, epsilon = 1e-5);
}

#[test]
fn exp_se3_pure_translation() {
    let xi = TangentVector::from_coords(
        GroupKind::Se3,
        DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]),
    )
    .unwrap();
    let m = xi.exp().matrix();
    let mut expected = DMatrix::identity(4, 4);
    expected[(0, 3)] = 1.0;
    expected[(1, 3)] = 2.0;
    expected[(2, 3)] = 3.0;
    assert_eq!(m, expected);
}

#[test]
fn exp_se2_negative_heading_matches_series() {
    // Negative headings must take the closed-form branch (the small-angle
    // guard is on |Re phi|, not Re phi).
    let xi = TangentVector::from_coords(
        GroupKind::Se2,
        DVector::from_vec(vec![-0.8, 1.0, -2.0]),
    )
    .unwrap();
    let m = xi.exp().matrix();
    let series = matrix_exp_series(&xi.wedge(), 30);
    assert!((m - series).amax() <= 1e-13);
}

#[test]
fn log_identity_is_zero() {
    for kind in [GroupKind::So3, GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        let xi = GroupElement::<f64>::identity(kind.clone()).log().unwrap();
        assert_eq!(xi.coords().amax(), 0.0);
    }
}

#[test]
fn log_exp_roundtrip_se3() {
    let xi = TangentVector::from_coords(
        GroupKind::Se3,
        DVector::from_vec(vec![0.1, -0.2, 0.3, 1.0, 2.0, 3.0]),
    )
    .unwrap();
    let back = xi.exp().log().unwrap();
    assert!((back.coords() - xi.coords()).amax() <= 1e-10);
}

#[test]
fn log_se2_quarter_turn() {
    let two_over_pi = 2.0 / PI;
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -1.0, two_over_pi, 1.0, 0.0, two_over_pi, 0.0, 0.0, 1.0],
    );
    let x = GroupElement::from_matrix(GroupKind::Se2, m).unwrap();
    let xi = x.log().unwrap();
    assert_relative_eq!(xi.coords()[0], FRAC_PI_2, epsilon = 1e-12);
    assert_relative_eq!(xi.coords()[1], 1.0, epsilon = 1e-12);
    assert_relative_eq!(xi.coords()[2], 0.0, epsilon = 1e-12);
}

#[test]
fn log_rejects_rotation_at_pi() {
    let xi = TangentVector::from_coords(
        GroupKind::Se3,
        DVector::from_vec(vec![PI - 1e-12, 0.0, 0.0, 0.5, 0.0, 0.0]),
    )
    .unwrap();
    assert!(matches!(
        xi.exp().log(),
        Err(GroupError::AngleAtPi { .. })
    ));
}

#[test]
fn inverse_identity() {
    let x = GroupElement::<f64>::identity(GroupKind::Se23);
    assert_eq!(x.inverse().matrix(), x.matrix());
}

#[test]
fn inverse_multiplies_back_to_identity() {
    let mut rng = rng();
    for kind in [GroupKind::So3, GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        let x = random_element(&mut rng, kind.clone(), 2.0);
        let prod = x.compose(&x.inverse()).matrix();
        let eye = DMatrix::identity(kind.dim(), kind.dim());
        assert!((prod - eye).amax() <= 1e-12);
    }
}

#[test]
fn inverse_se23_identity_rotation() {
    let x = GroupElement::se23_from_parts(
        &Matrix3::identity(),
        &Vector3::new(1.0, 0.0, 0.0),
        &Vector3::new(0.0, 1.0, 0.0),
    );
    let inv = x.inverse();
    assert_eq!(inv.se23_velocity(), Vector3::new(-1.0, 0.0, 0.0));
    assert_eq!(inv.se23_position(), Vector3::new(0.0, -1.0, 0.0));
}

#[test]
fn adjoint_identity_element() {
    for kind in [GroupKind::Se2, GroupKind::Se3, GroupKind::Se23] {
        let ad = GroupElement::<f64>::identity(kind.clone()).adjoint();
        assert_eq!(ad, DMatrix::identity(kind.dof(), kind.dof()));
    }
}

#[test]
fn adjoint_defining_identity_se3() {
    let mut rng = rng();
    for _ in 0..20 {
        let x = random_element(&mut rng, GroupKind::Se3, 1.5);
        let zeta = random_tangent(&mut rng, GroupKind::Se3, 2.0);
        let ad_zeta = TangentVector::from_coords(GroupKind::Se3, &x.adjoint() * zeta.coords())
            .unwrap()
            .wedge();
        let conj = &(&x.matrix() * &zeta.wedge()) * &x.inverse().matrix();
        assert!((ad_zeta - conj).amax() <= 1e-12);
    }
}

#[test]
fn adjoint_of_inverse_is_inverse_of_adjoint() {
    let mut rng = rng();
    for _ in 0..20 {
        let x = random_element(&mut rng, GroupKind::Se2, 1.5);
        let prod = x.inverse().adjoint() * x.adjoint();
        assert!((prod - DMatrix::identity(3, 3)).amax() <= 1e-12);
    }
}

#[test]
fn adjoint_exp_identity() {
    // exp((Ad(X) zeta)^wedge) = X exp(zeta^wedge) X^-1
    let mut rng = rng();
    let x = random_element(&mut rng, GroupKind::Se23, 1.0);
    let zeta = random_tangent(&mut rng, GroupKind::Se23, 0.7);
    let lhs = TangentVector::from_coords(GroupKind::Se23, &x.adjoint() * zeta.coords())
        .unwrap()
        .exp()
        .matrix();
    let rhs = &(&x.matrix() * &zeta.exp().matrix()) * &x.inverse().matrix();
    assert!((lhs - rhs).amax() <= 1e-12);
}

#[test]
fn odot_se3_homogeneous_origin() {
    let p = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
    let m = odot(&p, &GroupKind::Se3).unwrap();
    let mut expected = DMatrix::zeros(4, 6);
    for i in 0..3 {
        expected[(i, 3 + i)] = 1.0;
    }
    assert_eq!(m, expected);
}

#[test]
fn odot_se23_second_augmented_column() {
    let p = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    let m = odot(&p, &GroupKind::Se23).unwrap();
    let mut expected = DMatrix::zeros(5, 9);
    for i in 0..3 {
        expected[(i, 6 + i)] = 1.0;
    }
    assert_eq!(m, expected);
}

#[test]
fn odot_defining_identity() {
    let mut rng = rng();
    for kind in [GroupKind::Se3, GroupKind::Se23] {
        for _ in 0..20 {
            let p = DVector::from_fn(kind.dim(), |_, _| rng.random_range(-3.0..3.0));
            let x = random_tangent(&mut rng, kind.clone(), 2.0);
            let lhs = &x.wedge() * &p;
            let rhs = &odot(&p, &kind).unwrap() * x.coords();
            assert!((lhs - rhs).amax() <= 1e-14);
        }
    }
}

#[test]
fn odot_unsupported_kind() {
    let p = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    assert!(matches!(
        odot(&p, &GroupKind::Se2),
        Err(GroupError::UnsupportedKind { .. })
    ));
}

#[test]
fn pack_identities() {
    let x = GroupElement::<f64>::pack(vec![
        GroupElement::identity(GroupKind::Se2),
        GroupElement::identity(GroupKind::Se2),
    ])
    .unwrap();
    assert_eq!(x.matrix(), DMatrix::identity(6, 6));
}

#[test]
fn pack_unpack_roundtrip_bitwise() {
    let mut rng = rng();
    let blocks: Vec<_> = (0..3)
        .map(|_| random_element(&mut rng, GroupKind::Se2, 2.0))
        .collect();
    let packed = GroupElement::pack(blocks.clone()).unwrap();
    let unpacked = packed.unpack().unwrap();
    assert_eq!(blocks, unpacked);
}

#[test]
fn pack_empty_is_error() {
    assert!(matches!(
        GroupElement::<f64>::pack(vec![]),
        Err(GroupError::EmptyComposite)
    ));
}

#[test]
fn composite_exp_matches_series_on_dense_wedge() {
    let mut rng = rng();
    let kind = GroupKind::Composite(vec![GroupKind::Se2, GroupKind::Se3]);
    let xi = random_tangent(&mut rng, kind, 0.8);
    let blockwise = xi.exp().matrix();
    let series = matrix_exp_series(&xi.wedge(), 40);
    assert!((blockwise - series).amax() <= 1e-14);
}

#[test]
fn composite_log_and_adjoint_blockwise() {
    let mut rng = rng();
    let kind = GroupKind::Composite(vec![GroupKind::Se3, GroupKind::Se2]);
    let xi = random_tangent(&mut rng, kind.clone(), 0.8);
    let x = xi.exp();
    let back = x.log().unwrap();
    assert!((back.coords() - xi.coords()).amax() <= 1e-10);
    let ad = x.adjoint();
    assert_eq!(ad.nrows(), 9);
    // Off-diagonal coupling blocks between sub-elements must be zero.
    assert_eq!(ad.view((6, 0), (3, 6)).amax(), 0.0);
    assert_eq!(ad.view((0, 6), (6, 3)).amax(), 0.0);
}

#[test]
fn from_matrix_validates() {
    // Valid rotation passes.
    let xi = TangentVector::from_coords(
        GroupKind::Se3,
        DVector::from_vec(vec![0.2, 0.1, -0.4, 1.0, 0.0, 2.0]),
    )
    .unwrap();
    let m = xi.exp().matrix();
    assert!(GroupElement::from_matrix(GroupKind::Se3, m.clone()).is_ok());
    // Wrong bottom row fails.
    let mut bad = m.clone();
    bad[(3, 0)] = 0.1;
    assert!(GroupElement::from_matrix(GroupKind::Se3, bad).is_err());
    // Non-orthonormal rotation fails.
    let mut bad = m;
    bad[(0, 0)] += 1e-3;
    assert!(matches!(
        GroupElement::from_matrix(GroupKind::Se3, bad),
        Err(GroupError::InvalidElement { .. })
    ));
}

#[test]
fn heading_through_group_log_carries_complex_signal() {
    let h = 1e-20;
    let x = GroupElement::<f64>::se2_from_parts(0.7, &Vector2::new(1.0, -2.0));
    // Right-perturb the heading direction and check d(theta)/d(eps_phi) = 1.
    let eps = TangentVector::<Complex64>::basis(GroupKind::Se2, 0, Complex64::new(0.0, h));
    let xp = x.complexify().compose(&eps.exp());
    let theta = xp.se2_heading().unwrap();
    assert_relative_eq!(theta.re, 0.7, epsilon = 1e-12);
    assert_relative_eq!(theta.im / h, 1.0, epsilon = 1e-12);
}
