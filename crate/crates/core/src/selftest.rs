//! Seeded invariant suites, runnable in-process (the CLI `selftest`
//! command) and reused by the test suite.
//!
//! Each suite draws its inputs from a fixed-seed ChaCha stream, so two runs
//! produce identical summaries.

use crate::cstep::{self, GroupFunction};
use crate::groups::{odot, GroupElement, GroupKind, TangentVector};
use crate::scalar::CsScalar;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Truncated matrix-power series `sum_{k<=terms} M^k / k!`.
///
/// Reference implementation of the exponential, independent of the
/// closed-form maps it is used to check.
pub fn matrix_exp_series<T: CsScalar>(m: &DMatrix<T>, terms: usize) -> DMatrix<T> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix_exp_series: square matrix required");
    let mut acc = DMatrix::from_diagonal_element(n, n, T::one());
    let mut term = DMatrix::from_diagonal_element(n, n, T::one());
    for k in 1..=terms {
        term = &term * m;
        term /= T::from_real(k as f64);
        acc += &term;
    }
    acc
}

/// Outcome of one invariant suite.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

const KINDS: [GroupKind; 4] = [
    GroupKind::So3,
    GroupKind::Se2,
    GroupKind::Se3,
    GroupKind::Se23,
];

fn random_tangent(rng: &mut ChaCha12Rng, kind: &GroupKind, scale: f64) -> TangentVector<f64> {
    let coords = DVector::from_fn(kind.dof(), |_, _| rng.random_range(-scale..scale));
    TangentVector::from_coords(kind.clone(), coords).expect("dof matches by construction")
}

fn random_element(rng: &mut ChaCha12Rng, kind: &GroupKind, scale: f64) -> GroupElement<f64> {
    random_tangent(rng, kind, scale).exp()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Roundtrip `log(exp(xi)) = xi` to 1e-10 for rotation magnitudes below pi.
pub fn suite_exp_log_roundtrip() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0001);
    let mut failures = Vec::new();
    for kind in &KINDS {
        for trial in 0..100 {
            // Keep the rotation part safely inside the log domain.
            let xi = random_tangent(&mut rng, kind, 0.95);
            let back = match xi.exp().log() {
                Ok(v) => v,
                Err(e) => {
                    failures.push(format!("{kind} trial {trial}: log failed: {e}"));
                    continue;
                }
            };
            let err = (back.coords() - xi.coords()).amax();
            if err > 1e-10 {
                failures.push(format!("{kind} trial {trial}: roundtrip error {err:.3e}"));
            }
        }
    }
    SuiteResult {
        name: "exp-log-roundtrip",
        failures,
    }
}

/// Closed-form exponentials agree with a 30-term power series to 1e-12 for
/// real and near-real complex tangents with norm <= 2.
pub fn suite_series_oracle() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0002);
    let mut failures = Vec::new();
    for kind in &KINDS {
        for trial in 0..25 {
            let xi = random_tangent(&mut rng, kind, 2.0 / (kind.dof() as f64).sqrt());
            let closed = xi.exp().matrix();
            let series = matrix_exp_series(&xi.wedge(), 30);
            let err = max_abs_diff(&closed, &series);
            if err > 1e-12 {
                failures.push(format!("{kind} trial {trial}: series mismatch {err:.3e}"));
            }
            // Complex tangent with a small imaginary component.
            let xic = xi.cast::<num_complex::Complex64>();
            let mut coords = xic.coords().clone();
            for i in 0..coords.len() {
                coords[i].im = if i % 2 == 0 { 1e-8 } else { -1e-8 };
            }
            let xic = TangentVector::from_coords(kind.clone(), coords).unwrap();
            let closed_c = xic.exp().matrix();
            let series_c = matrix_exp_series(&xic.wedge(), 30);
            let err_c = (&closed_c - &series_c)
                .iter()
                .map(|z| (z.re * z.re + z.im * z.im).sqrt())
                .fold(0.0f64, f64::max);
            if err_c > 1e-12 {
                failures.push(format!(
                    "{kind} trial {trial}: complex series mismatch {err_c:.3e}"
                ));
            }
        }
    }
    SuiteResult {
        name: "series-oracle",
        failures,
    }
}

/// `(Ad(X) zeta)^wedge = X zeta^wedge X^-1` and the odot identity
/// `x^wedge p = p^odot x`, 100 draws per kind, to 1e-12.
pub fn suite_adjoint_and_odot() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0003);
    let mut failures = Vec::new();
    for kind in &KINDS {
        for trial in 0..100 {
            let x = random_element(&mut rng, kind, 1.2);
            let zeta = random_tangent(&mut rng, kind, 1.0);
            let lhs = TangentVector::from_coords(
                kind.clone(),
                &x.adjoint() * zeta.coords(),
            )
            .unwrap()
            .wedge();
            let rhs = &(&x.matrix() * &zeta.wedge()) * &x.inverse().matrix();
            let err = max_abs_diff(&lhs, &rhs);
            if err > 1e-12 {
                failures.push(format!("{kind} trial {trial}: adjoint identity {err:.3e}"));
            }
        }
    }
    for kind in [GroupKind::Se3, GroupKind::Se23] {
        for trial in 0..100 {
            let p = DVector::from_fn(kind.dim(), |_, _| rng.random_range(-2.0..2.0));
            let x = random_tangent(&mut rng, &kind, 1.5);
            let lhs = &x.wedge() * &p;
            let rhs = &odot(&p, &kind).unwrap() * x.coords();
            let err = (lhs - rhs).amax();
            if err > 1e-12 {
                failures.push(format!("{kind} trial {trial}: odot identity {err:.3e}"));
            }
        }
    }
    SuiteResult {
        name: "adjoint-and-odot",
        failures,
    }
}

/// Products of random elements satisfy the element invariants to 1e-9, and
/// small-argument BCH is first-order exact to 1e-9.
pub fn suite_closure_and_bch() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0004);
    let mut failures = Vec::new();
    for kind in &KINDS {
        for trial in 0..50 {
            let a = random_element(&mut rng, kind, 1.5);
            let b = random_element(&mut rng, kind, 1.5);
            let prod = a.compose(&b);
            if let Err(e) = GroupElement::from_matrix(kind.clone(), prod.matrix()) {
                failures.push(format!("{kind} trial {trial}: closure violated: {e}"));
            }
            let xi1 = random_tangent(&mut rng, kind, 1e-5);
            let xi2 = random_tangent(&mut rng, kind, 1e-5);
            let composed = xi1.exp().compose(&xi2.exp());
            match composed.log() {
                Ok(z) => {
                    let err = (z.coords() - (xi1.coords() + xi2.coords())).amax();
                    if err > 1e-9 {
                        failures.push(format!("{kind} trial {trial}: BCH error {err:.3e}"));
                    }
                }
                Err(e) => failures.push(format!("{kind} trial {trial}: BCH log failed: {e}")),
            }
        }
    }
    SuiteResult {
        name: "closure-and-first-order-bch",
        failures,
    }
}

/// `Im{exp(j h 1_i)}/h` equals the wedge of the basis direction to 1e-12,
/// and the left/right Jacobians of a smooth function are related by
/// `J_left = J_right Ad(X^-1)` to 1e-10.
pub fn suite_complex_perturbation_and_sides() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0005);
    let mut failures = Vec::new();
    let h = 1e-20;
    for kind in &KINDS {
        for i in 0..kind.dof() {
            let eps = TangentVector::<num_complex::Complex64>::basis(
                kind.clone(),
                i,
                num_complex::Complex64::new(0.0, h),
            );
            let m = eps.exp().matrix();
            let gen = TangentVector::<f64>::basis(kind.clone(), i, 1.0).wedge();
            let mut err = 0.0f64;
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    err = err.max((m[(r, c)].im / h - gen[(r, c)]).abs());
                }
            }
            if err > 1e-12 {
                failures.push(format!("{kind} direction {i}: exp perturbation {err:.3e}"));
            }
        }
    }
    // Left/right consistency through the adjoint.
    for kind in &KINDS {
        let x = random_element(&mut rng, kind, 1.0);
        let probe = SmoothProbe {
            target: random_element(&mut rng, kind, 1.0),
        };
        let jr = cstep::jacobian_right(&probe, &x, h).expect("right jacobian");
        let jl = cstep::jacobian_left(&probe, &x, h).expect("left jacobian");
        let relation = &jr.matrix * &x.inverse().adjoint();
        let err = max_abs_diff(&jl.matrix, &relation);
        if err > 1e-10 {
            failures.push(format!("{kind}: left/right adjoint relation {err:.3e}"));
        }
    }
    SuiteResult {
        name: "complex-perturbation-and-side-relation",
        failures,
    }
}

/// Composite packaging: blockwise exponential equals the series exponential
/// of the block-diagonal wedge to 1e-14.
pub fn suite_composite_block_exp() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0006);
    let mut failures = Vec::new();
    let kind = GroupKind::Composite(vec![GroupKind::Se2, GroupKind::Se3, GroupKind::Se23]);
    for trial in 0..20 {
        let xi = random_tangent(&mut rng, &kind, 0.8);
        let blockwise = xi.exp().matrix();
        let series = matrix_exp_series(&xi.wedge(), 40);
        let err = max_abs_diff(&blockwise, &series);
        if err > 1e-14 {
            failures.push(format!("trial {trial}: block exp mismatch {err:.3e}"));
        }
        let packed = GroupElement::pack(
            xi.split().iter().map(TangentVector::exp).collect(),
        )
        .unwrap();
        if packed.matrix() != xi.exp().matrix() {
            failures.push(format!("trial {trial}: pack/exp ordering mismatch"));
        }
        let unpacked = packed.clone().unpack().unwrap();
        let repacked = GroupElement::pack(unpacked).unwrap();
        if repacked != packed {
            failures.push(format!("trial {trial}: pack/unpack not bitwise"));
        }
    }
    SuiteResult {
        name: "composite-block-exp",
        failures,
    }
}

/// Complex-step Jacobians are insensitive to the step size across
/// h in {1e-12, 1e-16, 1e-20, 1e-30} (pairwise relative 1e-13) and
/// identical runs match bit for bit.
pub fn suite_step_insensitivity_and_determinism() -> SuiteResult {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0007);
    let mut failures = Vec::new();
    let v = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let f = cstep::problems::BilinearForm::new(v, y);
    let t = random_element(&mut rng, &GroupKind::Se3, 1.0);
    let steps = [1e-12, 1e-16, 1e-20, 1e-30];
    let jacs: Vec<_> = steps
        .iter()
        .map(|&h| cstep::jacobian_left(&f, &t, h).expect("jacobian").matrix)
        .collect();
    for i in 0..jacs.len() {
        for j in i + 1..jacs.len() {
            let rel = max_abs_diff(&jacs[i], &jacs[j]) / jacs[i].amax();
            if rel > 1e-13 {
                failures.push(format!(
                    "h={:.0e} vs h={:.0e}: relative spread {rel:.3e}",
                    steps[i], steps[j]
                ));
            }
        }
    }
    let again = cstep::jacobian_left(&f, &t, 1e-20).expect("jacobian").matrix;
    if again != jacs[2] {
        failures.push("repeated evaluation is not bit-for-bit identical".into());
    }
    SuiteResult {
        name: "step-insensitivity-and-determinism",
        failures,
    }
}

/// Runs every suite in order.
pub fn run_all() -> Vec<SuiteResult> {
    vec![
        suite_exp_log_roundtrip(),
        suite_series_oracle(),
        suite_adjoint_and_odot(),
        suite_closure_and_bch(),
        suite_complex_perturbation_and_sides(),
        suite_composite_block_exp(),
        suite_step_insensitivity_and_determinism(),
    ]
}

/// Smooth probe function used by the side-relation check:
/// `f(X) = ln(X_target^-1 X)^vee` flattened.
struct SmoothProbe {
    target: GroupElement<f64>,
}

impl GroupFunction for SmoothProbe {
    fn output_dim(&self) -> usize {
        self.target.dof()
    }

    fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
        let t: GroupElement<T> = self.target.cast();
        match t.inverse().compose(x).log() {
            Ok(v) => v.into_coords(),
            Err(_) => DVector::from_element(self.output_dim(), T::from_real(f64::NAN)),
        }
    }
}
