//! Randomized property tests over the group kernels and the
//! differentiation engine.

use lie_cstep::cstep::{self, problems::BilinearForm, Side};
use lie_cstep::groups::{vee, GroupElement, GroupKind, TangentVector};
use lie_cstep::selftest::matrix_exp_series;
use nalgebra::DVector;
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = GroupKind> {
    prop_oneof![
        Just(GroupKind::So3),
        Just(GroupKind::Se2),
        Just(GroupKind::Se3),
        Just(GroupKind::Se23),
    ]
}

/// Tangent with every coordinate in [-bound, bound].
fn tangent_strategy(
    kind: GroupKind,
    bound: f64,
) -> impl Strategy<Value = TangentVector<f64>> {
    let n = kind.dof();
    proptest::collection::vec(-bound..bound, n).prop_map(move |coords| {
        TangentVector::from_coords(kind.clone(), DVector::from_vec(coords)).expect("dof")
    })
}

/// Rotation coordinates bounded so the angle stays below pi - 0.1.
fn log_safe_bound(kind: &GroupKind) -> f64 {
    match kind {
        // All three coordinates contribute to the rotation norm.
        GroupKind::So3 => (std::f64::consts::PI - 0.1) / 3f64.sqrt(),
        GroupKind::Se2 => std::f64::consts::PI - 0.1,
        GroupKind::Se3 | GroupKind::Se23 => (std::f64::consts::PI - 0.1) / 3f64.sqrt(),
        GroupKind::Composite(_) => unreachable!(),
    }
}

proptest! {
    #[test]
    fn wedge_vee_roundtrip(xi in kind_strategy().prop_flat_map(|k| tangent_strategy(k, 3.0))) {
        let back = vee(&xi.wedge(), xi.kind()).unwrap();
        prop_assert_eq!(back.coords(), xi.coords());
    }

    #[test]
    fn exp_log_roundtrip(kind in kind_strategy(), scale in 0.0f64..1.0) {
        let bound = log_safe_bound(&kind).min(2.0) * scale.max(1e-3);
        let coords = DVector::from_fn(kind.dof(), |i, _| bound * ((i as f64 + 1.0) * 0.71).sin());
        let xi = TangentVector::from_coords(kind.clone(), coords).unwrap();
        let back = xi.exp().log().unwrap();
        prop_assert!((back.coords() - xi.coords()).amax() <= 1e-10);
    }

    #[test]
    fn exp_matches_series(xi in kind_strategy().prop_flat_map(|k| tangent_strategy(k, 0.8))) {
        let closed = xi.exp().matrix();
        let series = matrix_exp_series(&xi.wedge(), 30);
        prop_assert!((closed - series).amax() <= 1e-12);
    }

    #[test]
    fn products_stay_in_the_group(
        a in kind_strategy().prop_flat_map(|k| (Just(k.clone()), tangent_strategy(k, 1.2))),
    ) {
        let (kind, xi) = a;
        let x = xi.exp();
        let y = TangentVector::from_coords(
            kind.clone(),
            xi.coords().map(|v| (v * 1.7).cos()),
        )
        .unwrap()
        .exp();
        let product = x.compose(&y);
        prop_assert!(GroupElement::from_matrix(kind, product.matrix()).is_ok());
    }

    #[test]
    fn adjoint_defining_identity(
        a in kind_strategy().prop_flat_map(|k| (tangent_strategy(k.clone(), 1.0), tangent_strategy(k, 1.5))),
    ) {
        let (xi, zeta) = a;
        let x = xi.exp();
        let lhs = TangentVector::from_coords(
            xi.kind().clone(),
            &x.adjoint() * zeta.coords(),
        )
        .unwrap()
        .wedge();
        let rhs = &(&x.matrix() * &zeta.wedge()) * &x.inverse().matrix();
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn left_and_right_jacobians_related_by_adjoint(
        xi in tangent_strategy(GroupKind::Se3, 1.0),
        v0 in -2.0f64..2.0,
        v1 in -2.0f64..2.0,
    ) {
        let x = xi.exp();
        let f = BilinearForm::new(
            DVector::from_vec(vec![v0, 1.0, v1, 0.5]),
            DVector::from_vec(vec![v1, -1.0, v0, 1.0]),
        );
        let jr = cstep::jacobian_right(&f, &x, 1e-20).unwrap();
        let jl = cstep::jacobian_left(&f, &x, 1e-20).unwrap();
        let relation = &jr.matrix * &x.inverse().adjoint();
        prop_assert!((jl.matrix - relation).amax() <= 1e-10);
    }

    #[test]
    fn scalar_complex_step_differentiates_polynomials(
        x in -3.0f64..3.0,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let d = cstep::complex_step_scalar(
            |z| z * z * z * num_complex::Complex64::new(a, 0.0)
                + z * z * num_complex::Complex64::new(b, 0.0),
            x,
            1e-20,
        )
        .unwrap();
        let analytic = 3.0 * a * x * x + 2.0 * b * x;
        prop_assert!((d - analytic).abs() <= 1e-13 * (1.0 + analytic.abs()));
    }

    #[test]
    fn central_difference_side_matches_definition(
        xi in tangent_strategy(GroupKind::Se2, 1.0),
        h in 1e-7f64..1e-4,
    ) {
        // Central difference of a constant is exactly zero at any h.
        let x = xi.exp();
        let f = cstep::problems::Constant {
            value: DVector::from_vec(vec![2.5, -1.0]),
        };
        let j = cstep::jacobian_central(&f, &x, h, Side::Right).unwrap();
        prop_assert_eq!(j.matrix.amax(), 0.0);
        prop_assert_eq!(j.evaluations, 2 * x.dof());
    }
}
