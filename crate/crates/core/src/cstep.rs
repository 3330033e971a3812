//! Differentiation engine: scalar complex-step, right/left Lie-group
//! complex-step Jacobians, finite-difference comparators, and step-size
//! sweeps.
//!
//! A right Jacobian column is `Im{f(X exp((j h 1_i)^wedge))}/h`; the left
//! variant perturbs on the other side. One complex function evaluation per
//! column, no subtractive cancellation, so `h` can be driven arbitrarily
//! small (default `1e-20`).

use crate::groups::{GroupElement, TangentVector};
use crate::scalar::CsScalar;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::cell::Cell;
use std::io::Write;
use thiserror::Error;

/// Default complex-step size used throughout the crate.
pub const DEFAULT_STEP: f64 = 1e-20;

/// Which side the perturbation is applied on:
/// `X = X_bar exp(eps^wedge)` (right) or `X = exp(eps^wedge) X_bar` (left).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Right => write!(f, "right"),
            Side::Left => write!(f, "left"),
        }
    }
}

/// A function from a group element (possibly composite) to a flat vector of
/// complex-capable scalars. Implementations must be written once over the
/// generic scalar so the same code path evaluates real and complex inputs,
/// and must return a real vector at real elements.
pub trait GroupFunction {
    /// Output dimension q.
    fn output_dim(&self) -> usize;

    fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T>;
}

/// Errors from Jacobian evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CstepError {
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("function returned a non-finite value in column {column}")]
    NonFinite { column: usize },
    #[error("function output dimension {got} does not match declared {expected}")]
    OutputDim { expected: usize, got: usize },
    #[error("function is not real-valued at the real nominal point (|Im| = {imag_norm:.3e})")]
    NotRealAtNominal { imag_norm: f64 },
    #[error("step list must be non-empty and strictly positive")]
    InvalidStepList,
}

/// A computed Jacobian with its provenance.
#[derive(Debug, Clone)]
pub struct JacobianResult {
    /// q x n real matrix.
    pub matrix: DMatrix<f64>,
    pub side: Side,
    /// Step size used.
    pub step: f64,
    /// Number of function evaluations performed.
    pub evaluations: usize,
}

/// Scalar complex-step derivative `Im{f(x + j h)}/h`.
pub fn complex_step_scalar<F>(f: F, x: f64, h: f64) -> Result<f64, CstepError>
where
    F: Fn(Complex64) -> Complex64,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(CstepError::InvalidStep(h));
    }
    let z = f(Complex64::new(x, h));
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(CstepError::NonFinite { column: 0 });
    }
    Ok(z.im / h)
}

fn complex_step_group<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    h: f64,
    side: Side,
) -> Result<JacobianResult, CstepError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(CstepError::InvalidStep(h));
    }
    let n = x.dof();
    let q = f.output_dim();
    let xc = x.complexify();
    let mut jac = DMatrix::<f64>::zeros(q, n);
    for i in 0..n {
        let eps = TangentVector::<Complex64>::basis(x.kind().clone(), i, Complex64::new(0.0, h));
        let perturbed = match side {
            Side::Right => xc.compose(&eps.exp()),
            Side::Left => eps.exp().compose(&xc),
        };
        let value = f.eval(&perturbed);
        if value.len() != q {
            return Err(CstepError::OutputDim {
                expected: q,
                got: value.len(),
            });
        }
        for r in 0..q {
            let z = value[r];
            if !z.cs_is_finite() {
                return Err(CstepError::NonFinite { column: i });
            }
            jac[(r, i)] = z.imag() / h;
        }
    }
    Ok(JacobianResult {
        matrix: jac,
        side,
        step: h,
        evaluations: n,
    })
}

/// Right complex-step Jacobian: column i is
/// `Im{f(X_bar exp((j h 1_i)^wedge))}/h`. Exactly `n` function evaluations.
pub fn jacobian_right<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    h: f64,
) -> Result<JacobianResult, CstepError> {
    complex_step_group(f, x, h, Side::Right)
}

/// Left complex-step Jacobian: perturbation applied as
/// `exp((j h 1_i)^wedge) X_bar`.
pub fn jacobian_left<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    h: f64,
) -> Result<JacobianResult, CstepError> {
    complex_step_group(f, x, h, Side::Left)
}

fn perturbed_real(x: &GroupElement<f64>, i: usize, step: f64, side: Side) -> GroupElement<f64> {
    let eps = TangentVector::<f64>::basis(x.kind().clone(), i, step);
    match side {
        Side::Right => x.compose(&eps.exp()),
        Side::Left => eps.exp().compose(&x.clone()),
    }
}

fn check_real_finite(v: &DVector<f64>, column: usize) -> Result<(), CstepError> {
    if v.iter().any(|x| !x.is_finite()) {
        Err(CstepError::NonFinite { column })
    } else {
        Ok(())
    }
}

/// Central-difference comparator:
/// `[f(X exp(h 1_i)) - f(X exp(-h 1_i))]/(2h)` per column, `2n` evaluations.
pub fn jacobian_central<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    h: f64,
    side: Side,
) -> Result<JacobianResult, CstepError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(CstepError::InvalidStep(h));
    }
    let n = x.dof();
    let q = f.output_dim();
    let mut jac = DMatrix::<f64>::zeros(q, n);
    let mut evaluations = 0;
    for i in 0..n {
        let plus = f.eval(&perturbed_real(x, i, h, side));
        let minus = f.eval(&perturbed_real(x, i, -h, side));
        evaluations += 2;
        check_real_finite(&plus, i)?;
        check_real_finite(&minus, i)?;
        for r in 0..q {
            jac[(r, i)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    Ok(JacobianResult {
        matrix: jac,
        side,
        step: h,
        evaluations,
    })
}

/// Forward-difference comparator: `[f(X exp(h 1_i)) - f(X)]/h` per column,
/// `n + 1` evaluations.
pub fn jacobian_forward<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    h: f64,
    side: Side,
) -> Result<JacobianResult, CstepError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(CstepError::InvalidStep(h));
    }
    let n = x.dof();
    let q = f.output_dim();
    let base = f.eval(x);
    check_real_finite(&base, 0)?;
    let mut jac = DMatrix::<f64>::zeros(q, n);
    for i in 0..n {
        let plus = f.eval(&perturbed_real(x, i, h, side));
        check_real_finite(&plus, i)?;
        for r in 0..q {
            jac[(r, i)] = (plus[r] - base[r]) / h;
        }
    }
    Ok(JacobianResult {
        matrix: jac,
        side,
        step: h,
        evaluations: n + 1,
    })
}

/// Verifies the `f(X_bar) in R` assumption behind the complex-step formula:
/// evaluates `f` once at the complexified nominal point and checks the
/// imaginary parts vanish.
pub fn check_real_at_nominal<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
) -> Result<(), CstepError> {
    let v = f.eval(&x.complexify());
    let imag_norm = v.iter().map(|z| z.imag().abs()).fold(0.0, f64::max);
    if imag_norm > 0.0 {
        return Err(CstepError::NotRealAtNominal { imag_norm });
    }
    Ok(())
}

/// Differentiation method labels used in sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    ComplexStep,
    CentralDifference,
}

impl std::fmt::Display for DiffMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiffMethod::ComplexStep => write!(f, "complex_step"),
            DiffMethod::CentralDifference => write!(f, "central_difference"),
        }
    }
}

/// Where the reference Jacobian of a sweep came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Analytic,
    /// Complex-step at the default `1e-20` step.
    ComplexStepDefault,
}

impl std::fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceKind::Analytic => write!(f, "analytic"),
            ReferenceKind::ComplexStepDefault => write!(f, "complex_step_h_1e-20"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub h: f64,
    pub method: DiffMethod,
    pub rel_error: f64,
}

/// Relative-error-vs-step-size report (the data behind the error curves).
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub reference: ReferenceKind,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Smallest relative error achieved by a method across the sweep.
    pub fn min_error(&self, method: DiffMethod) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.rel_error)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Rows of one method, in sweep order (h strictly decreasing).
    pub fn errors(&self, method: DiffMethod) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.h, r.rel_error))
            .collect()
    }

    /// Writes `h,method,rel_error` rows in scientific notation with 16
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "h,method,rel_error")?;
        for row in &self.rows {
            writeln!(w, "{:.15e},{},{:.15e}", row.h, row.method, row.rel_error)?;
        }
        Ok(())
    }
}

/// Frobenius-relative error between a Jacobian and a reference (for a
/// single-row Jacobian this is the relative 2-norm).
pub fn relative_error(j: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (j - reference).norm() / reference.norm()
}

/// Runs complex-step and central-difference Jacobians over a list of step
/// sizes, reporting the relative error of each against `reference`.
pub fn step_sweep<F: GroupFunction>(
    f: &F,
    x: &GroupElement<f64>,
    side: Side,
    reference: &DMatrix<f64>,
    reference_kind: ReferenceKind,
    h_list: &[f64],
) -> Result<SweepReport, CstepError> {
    if h_list.is_empty() || h_list.iter().any(|&h| !h.is_finite() || h <= 0.0) {
        return Err(CstepError::InvalidStepList);
    }
    let mut steps: Vec<f64> = h_list.to_vec();
    steps.sort_by(|a, b| b.total_cmp(a));
    steps.dedup();
    let mut rows = Vec::with_capacity(2 * steps.len());
    for &h in &steps {
        let cs = complex_step_group(f, x, h, side)?;
        rows.push(SweepRow {
            h,
            method: DiffMethod::ComplexStep,
            rel_error: relative_error(&cs.matrix, reference),
        });
        let cd = jacobian_central(f, x, h, side)?;
        rows.push(SweepRow {
            h,
            method: DiffMethod::CentralDifference,
            rel_error: relative_error(&cd.matrix, reference),
        });
    }
    Ok(SweepReport {
        reference: reference_kind,
        rows,
    })
}

/// Wrapper that counts how many times the inner function is evaluated.
/// Used to assert the evaluation-count contract from the outside.
pub struct Instrumented<'a, F> {
    inner: &'a F,
    count: Cell<usize>,
}

impl<'a, F: GroupFunction> Instrumented<'a, F> {
    pub fn new(inner: &'a F) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.count.get()
    }
}

impl<F: GroupFunction> GroupFunction for Instrumented<'_, F> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
        self.count.set(self.count.get() + 1);
        self.inner.eval(x)
    }
}

pub mod problems {
    //! Built-in test problems.

    use super::GroupFunction;
    use crate::groups::{odot, GroupElement};
    use crate::scalar::CsScalar;
    use nalgebra::{DMatrix, DVector};

    /// `f(T) = v^T T y` for homogeneous vectors `v`, `y`.
    ///
    /// Its analytic left Jacobian is the single row `v^T (T_bar y)^odot`.
    pub struct BilinearForm {
        v: DVector<f64>,
        y: DVector<f64>,
    }

    impl BilinearForm {
        pub fn new(v: DVector<f64>, y: DVector<f64>) -> Self {
            assert_eq!(v.len(), y.len(), "v and y must have equal length");
            Self { v, y }
        }

        /// `v^T (T_bar y)^odot`, the first-order left Jacobian.
        pub fn analytic_left_jacobian(&self, t_bar: &GroupElement<f64>) -> DMatrix<f64> {
            let ty = t_bar.matrix() * &self.y;
            let od = odot(&ty, t_bar.kind()).expect("odot-capable kind");
            let row = self.v.transpose() * od;
            DMatrix::from_row_slice(1, t_bar.dof(), row.as_slice())
        }
    }

    impl GroupFunction for BilinearForm {
        fn output_dim(&self) -> usize {
            1
        }

        fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
            let m = x.matrix();
            let mut acc = T::zero();
            for r in 0..m.nrows() {
                let mut row = T::zero();
                for c in 0..m.ncols() {
                    row += m[(r, c)] * T::from_real(self.y[c]);
                }
                acc += T::from_real(self.v[r]) * row;
            }
            DVector::from_vec(vec![acc])
        }
    }

    /// `e(T) = ln(T^-1 T_ref)^vee`: the pose error to a reference element.
    ///
    /// Its analytic left Jacobian under a first-order BCH approximation is
    /// `-Ad(T_bar^-1)`.
    pub struct LogToReference {
        t_ref: GroupElement<f64>,
    }

    impl LogToReference {
        pub fn new(t_ref: GroupElement<f64>) -> Self {
            Self { t_ref }
        }

        pub fn reference(&self) -> &GroupElement<f64> {
            &self.t_ref
        }

        /// `-Ad(T_bar^-1)` (first-order BCH).
        pub fn analytic_left_jacobian(&self, t_bar: &GroupElement<f64>) -> DMatrix<f64> {
            -t_bar.inverse().adjoint()
        }
    }

    impl GroupFunction for LogToReference {
        fn output_dim(&self) -> usize {
            self.t_ref.dof()
        }

        fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
            let t_ref: GroupElement<T> = self.t_ref.cast();
            match x.inverse().compose(&t_ref).log() {
                Ok(v) => v.into_coords(),
                // Out of the log domain: surface as non-finite so the
                // engine reports it instead of panicking.
                Err(_) => DVector::from_element(self.output_dim(), T::from_real(f64::NAN)),
            }
        }
    }

    /// Constant function; its Jacobian is identically zero.
    pub struct Constant {
        pub value: DVector<f64>,
    }

    impl GroupFunction for Constant {
        fn output_dim(&self) -> usize {
            self.value.len()
        }

        fn eval<T: CsScalar>(&self, _x: &GroupElement<T>) -> DVector<T> {
            self.value.map(T::from_real)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::problems::{BilinearForm, Constant, LogToReference};
    use super::*;
    use crate::groups::GroupKind;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_se3(rng: &mut ChaCha12Rng) -> GroupElement<f64> {
        let coords = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        TangentVector::from_coords(GroupKind::Se3, coords)
            .unwrap()
            .exp()
    }

    #[test]
    fn scalar_cube() {
        let d = complex_step_scalar(|z| z * z * z, 2.0, 1e-20).unwrap();
        assert_relative_eq!(d, 12.0, max_relative = 1e-14);
    }

    #[test]
    fn scalar_constant_is_exactly_zero() {
        let d = complex_step_scalar(|_| Complex64::new(5.0, 0.0), 3.3, 1e-20).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn scalar_sine() {
        let d = complex_step_scalar(|z| z.sin(), 0.7, 1e-20).unwrap();
        assert_relative_eq!(d, 0.7f64.cos(), max_relative = 1e-15);
    }

    #[test]
    fn scalar_rejects_bad_step() {
        assert!(matches!(
            complex_step_scalar(|z| z, 0.0, 0.0),
            Err(CstepError::InvalidStep(_))
        ));
    }

    #[test]
    fn right_jacobian_of_bilinear_form_at_identity() {
        // v = e1, y = homogeneous origin: row must be [0 0 0 | 1 0 0].
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let f = BilinearForm::new(v, y);
        let t = GroupElement::identity(GroupKind::Se3);
        let j = jacobian_right(&f, &t, 1e-20).unwrap();
        let expected = DMatrix::from_row_slice(1, 6, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(relative_error(&j.matrix, &expected) <= 1e-14);
        assert_eq!(j.evaluations, 6);
        // At the identity the left Jacobian coincides.
        let jl = jacobian_left(&f, &t, 1e-20).unwrap();
        assert_eq!(j.matrix, jl.matrix);
    }

    #[test]
    fn constant_function_has_zero_jacobian() {
        let f = Constant {
            value: DVector::from_vec(vec![1.0, 2.0]),
        };
        let t = GroupElement::identity(GroupKind::Se2);
        let j = jacobian_right(&f, &t, 1e-20).unwrap();
        assert_eq!(j.matrix, DMatrix::zeros(2, 3));
    }

    #[test]
    fn log_offset_jacobian_is_identity_at_reference() {
        // f(T) = ln(T0^-1 T)^vee has right Jacobian = identity at T = T0.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let t0 = random_se3(&mut rng);
        struct LogFrom {
            t0: GroupElement<f64>,
        }
        impl GroupFunction for LogFrom {
            fn output_dim(&self) -> usize {
                6
            }
            fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
                let t0: GroupElement<T> = self.t0.cast();
                match t0.inverse().compose(x).log() {
                    Ok(v) => v.into_coords(),
                    Err(_) => DVector::from_element(6, T::from_real(f64::NAN)),
                }
            }
        }
        let f = LogFrom { t0: t0.clone() };
        let j = jacobian_right(&f, &t0, 1e-20).unwrap();
        assert!((&j.matrix - DMatrix::<f64>::identity(6, 6)).amax() <= 1e-12);
    }

    #[test]
    fn example1_left_jacobian_matches_analytic() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..5 {
            let v = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let f = BilinearForm::new(v, y);
            let t = random_se3(&mut rng);
            let analytic = f.analytic_left_jacobian(&t);
            let j = jacobian_left(&f, &t, 1e-20).unwrap();
            assert!(relative_error(&j.matrix, &analytic) <= 1e-14);
        }
    }

    #[test]
    fn example2_left_jacobian_matches_neg_adjoint_for_small_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let t_bar = random_se3(&mut rng);
        // Reference close to the nominal point so first-order BCH is tight:
        // the neglected bracket term is O(|e|), so |e| ~ 1e-9 keeps the
        // agreement within 1e-8.
        let small = DVector::from_fn(6, |_, _| rng.random_range(-1e-9..1e-9));
        let offset = TangentVector::from_coords(GroupKind::Se3, small)
            .unwrap()
            .exp();
        let t_ref = t_bar.compose(&offset);
        let f = LogToReference::new(t_ref);
        let j = jacobian_left(&f, &t_bar, 1e-20).unwrap();
        let analytic = f.analytic_left_jacobian(&t_bar);
        assert!((&j.matrix - &analytic).amax() <= 1e-8);
    }

    #[test]
    fn central_difference_error_window() {
        // Against the analytic Jacobian, central difference at h = 1e-5
        // sits in the truncation/cancellation window.
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let v = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let f = BilinearForm::new(v, y);
        let t = random_se3(&mut rng);
        let analytic = f.analytic_left_jacobian(&t);
        let j = jacobian_central(&f, &t, 1e-5, Side::Left).unwrap();
        let err = relative_error(&j.matrix, &analytic);
        assert!((1e-12..=1e-7).contains(&err), "err = {err:.3e}");
        assert_eq!(j.evaluations, 12);
        // Tiny central steps are destroyed by subtractive cancellation.
        let tiny = jacobian_central(&f, &t, 1e-15, Side::Left).unwrap();
        let tiny_err = relative_error(&tiny.matrix, &analytic);
        assert!(tiny_err > 100.0 * err, "tiny {tiny_err:.3e} vs {err:.3e}");
    }

    #[test]
    fn forward_difference_counts_and_linear_exactness() {
        let v = DVector::from_vec(vec![0.3, -0.2, 0.9, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, -1.0, 1.0]);
        let f = BilinearForm::new(v, y);
        let t = GroupElement::identity(GroupKind::Se3);
        let j = jacobian_forward(&f, &t, 1e-7, Side::Right).unwrap();
        assert_eq!(j.evaluations, 7);
        let analytic = f.analytic_left_jacobian(&t);
        assert!(relative_error(&j.matrix, &analytic) < 1e-6);
    }

    #[test]
    fn sweep_shape_and_ordering() {
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let v = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let f = BilinearForm::new(v, y);
        let t = random_se3(&mut rng);
        let analytic = f.analytic_left_jacobian(&t);
        let steps: Vec<f64> = (1..=20).map(|k| 10f64.powi(-k)).collect();
        let report = step_sweep(
            &f,
            &t,
            Side::Left,
            &analytic,
            ReferenceKind::Analytic,
            &steps,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 40);
        // Complex-step curve: nonincreasing until it plateaus at <= 1e-15.
        let cs = report.errors(DiffMethod::ComplexStep);
        let plateau = 1e-15;
        let mut previous = f64::INFINITY;
        for &(_, err) in &cs {
            assert!(
                err <= previous.max(plateau) * (1.0 + 1e-9) || err <= plateau,
                "complex-step curve increased above the plateau"
            );
            previous = err;
        }
        assert!(report.min_error(DiffMethod::ComplexStep).unwrap() <= plateau);
        // Central difference never reaches the complex-step floor.
        assert!(
            report.min_error(DiffMethod::CentralDifference).unwrap()
                > report.min_error(DiffMethod::ComplexStep).unwrap()
        );
    }

    #[test]
    fn sweep_single_step_has_one_row_per_method() {
        let f = Constant {
            value: DVector::from_vec(vec![1.0]),
        };
        let t = GroupElement::identity(GroupKind::Se2);
        let reference = DMatrix::zeros(1, 3);
        let report = step_sweep(
            &f,
            &t,
            Side::Right,
            &reference,
            ReferenceKind::Analytic,
            &[1e-8],
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn instrumented_counts_match_contract() {
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let f = BilinearForm::new(v, y);
        let t = GroupElement::identity(GroupKind::Se3);
        let counted = Instrumented::new(&f);
        jacobian_right(&counted, &t, 1e-20).unwrap();
        assert_eq!(counted.evaluations(), 6);
        let counted = Instrumented::new(&f);
        jacobian_central(&counted, &t, 1e-6, Side::Right).unwrap();
        assert_eq!(counted.evaluations(), 12);
    }

    #[test]
    fn real_at_nominal_check() {
        let f = Constant {
            value: DVector::from_vec(vec![2.0]),
        };
        let t = GroupElement::identity(GroupKind::Se2);
        assert!(check_real_at_nominal(&f, &t).is_ok());
    }
}
