//! Matrix Lie group kernels for SO(3), SE(2), SE(3), SE_2(3) and
//! block-diagonal composites of them, over complex-capable scalars.
//!
//! Elements are stored as their defining matrices (composites store their
//! diagonal blocks). Tangent vectors use a fixed component ordering:
//!
//! * SE(2): `[phi, r1, r2]`
//! * SE(3): `[phi (3), r (3)]`
//! * SE_2(3): `[phi (3), v (3), r (3)]`
//! * composite: concatenation of the block orderings.
//!
//! All maps are closed form; no general-purpose matrix exponential,
//! logarithm, or inversion routine is ever called.

mod se2;
pub(crate) mod so3;

use crate::scalar::CsScalar;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use thiserror::Error;

pub use crate::scalar::{complexified_atan2, Atan2Undefined};

/// Errors from group-kernel operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GroupError {
    #[error("coordinate length {got} does not match dof {expected} of {kind}")]
    DimensionMismatch {
        kind: String,
        expected: usize,
        got: usize,
    },
    #[error("matrix is {got_rows}x{got_cols}, expected {expected}x{expected} for {kind}")]
    MatrixShape {
        kind: String,
        expected: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("matrix does not satisfy the {kind} element invariants: {detail}")]
    InvalidElement { kind: String, detail: String },
    #[error("matrix violates the {kind} algebra sparsity pattern at ({row},{col})")]
    AlgebraPattern {
        kind: String,
        row: usize,
        col: usize,
    },
    #[error("logarithm ill conditioned: rotation angle {angle} is within 1e-9 of pi")]
    AngleAtPi { angle: f64 },
    #[error("operation not supported for kind {kind}")]
    UnsupportedKind { kind: String },
    #[error("composite element requires a non-empty block list")]
    EmptyComposite,
}

/// Which matrix Lie group an element or tangent vector belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupKind {
    So3,
    Se2,
    Se3,
    Se23,
    /// Block-diagonal packaging of several elements into one group.
    Composite(Vec<GroupKind>),
}

impl GroupKind {
    /// Degrees of freedom (tangent dimension).
    pub fn dof(&self) -> usize {
        match self {
            GroupKind::So3 | GroupKind::Se2 => 3,
            GroupKind::Se3 => 6,
            GroupKind::Se23 => 9,
            GroupKind::Composite(inner) => inner.iter().map(GroupKind::dof).sum(),
        }
    }

    /// Matrix dimension m of the m x m representation.
    pub fn dim(&self) -> usize {
        match self {
            GroupKind::So3 | GroupKind::Se2 => 3,
            GroupKind::Se3 => 4,
            GroupKind::Se23 => 5,
            GroupKind::Composite(inner) => inner.iter().map(GroupKind::dim).sum(),
        }
    }

    pub fn is_composite(&self) -> bool {
        matches!(self, GroupKind::Composite(_))
    }

    fn name(&self) -> String {
        match self {
            GroupKind::So3 => "SO(3)".into(),
            GroupKind::Se2 => "SE(2)".into(),
            GroupKind::Se3 => "SE(3)".into(),
            GroupKind::Se23 => "SE_2(3)".into(),
            GroupKind::Composite(inner) => format!("composite[{}]", inner.len()),
        }
    }
}

impl std::fmt::Display for GroupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Tangent-space vector (the `xi` or perturbation `epsilon` coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T: CsScalar> {
    kind: GroupKind,
    coords: DVector<T>,
}

impl<T: CsScalar> TangentVector<T> {
    pub fn zero(kind: GroupKind) -> Self {
        let n = kind.dof();
        Self {
            kind,
            coords: DVector::from_element(n, T::zero()),
        }
    }

    pub fn from_coords(kind: GroupKind, coords: DVector<T>) -> Result<Self, GroupError> {
        if coords.len() != kind.dof() {
            return Err(GroupError::DimensionMismatch {
                kind: kind.name(),
                expected: kind.dof(),
                got: coords.len(),
            });
        }
        Ok(Self { kind, coords })
    }

    /// Basis direction `i` scaled by `scale` (used to build `j h 1_i`).
    pub fn basis(kind: GroupKind, i: usize, scale: T) -> Self {
        let mut v = Self::zero(kind);
        v.coords[i] = scale;
        v
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn coords(&self) -> &DVector<T> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<T> {
        self.coords
    }

    /// Splits a composite tangent into its per-block tangents.
    pub fn split(&self) -> Vec<TangentVector<T>> {
        match &self.kind {
            GroupKind::Composite(inner) => {
                let mut out = Vec::with_capacity(inner.len());
                let mut off = 0;
                for k in inner {
                    let n = k.dof();
                    out.push(TangentVector {
                        kind: k.clone(),
                        coords: self.coords.rows(off, n).into_owned(),
                    });
                    off += n;
                }
                out
            }
            _ => vec![self.clone()],
        }
    }

    /// Wedge operator: maps coordinates to the matrix Lie algebra. For
    /// composites this is the block-diagonal of the block wedges.
    pub fn wedge(&self) -> DMatrix<T> {
        let x = &self.coords;
        match &self.kind {
            GroupKind::So3 => {
                let k = so3::skew(&Vector3::new(x[0], x[1], x[2]));
                DMatrix::from_fn(3, 3, |r, c| k[(r, c)])
            }
            GroupKind::Se2 => {
                let mut m = DMatrix::from_element(3, 3, T::zero());
                m[(0, 1)] = -x[0];
                m[(1, 0)] = x[0];
                m[(0, 2)] = x[1];
                m[(1, 2)] = x[2];
                m
            }
            GroupKind::Se3 => {
                let mut m = DMatrix::from_element(4, 4, T::zero());
                let k = so3::skew(&Vector3::new(x[0], x[1], x[2]));
                for r in 0..3 {
                    for c in 0..3 {
                        m[(r, c)] = k[(r, c)];
                    }
                    m[(r, 3)] = x[3 + r];
                }
                m
            }
            GroupKind::Se23 => {
                let mut m = DMatrix::from_element(5, 5, T::zero());
                let k = so3::skew(&Vector3::new(x[0], x[1], x[2]));
                for r in 0..3 {
                    for c in 0..3 {
                        m[(r, c)] = k[(r, c)];
                    }
                    m[(r, 3)] = x[3 + r];
                    m[(r, 4)] = x[6 + r];
                }
                m
            }
            GroupKind::Composite(inner) => {
                let dim = self.kind.dim();
                let mut m = DMatrix::from_element(dim, dim, T::zero());
                let mut row = 0;
                let mut off = 0;
                for k in inner {
                    let block = TangentVector {
                        kind: k.clone(),
                        coords: self.coords.rows(off, k.dof()).into_owned(),
                    }
                    .wedge();
                    m.view_mut((row, row), (k.dim(), k.dim())).copy_from(&block);
                    row += k.dim();
                    off += k.dof();
                }
                m
            }
        }
    }

    /// Exponential map, using the closed forms of each group; composites
    /// exponentiate blockwise.
    pub fn exp(&self) -> GroupElement<T> {
        let x = &self.coords;
        match &self.kind {
            GroupKind::So3 => {
                let c = so3::exp(&Vector3::new(x[0], x[1], x[2]));
                GroupElement::unchecked(GroupKind::So3, dmat_from3(&c))
            }
            GroupKind::Se2 => {
                let m = se2::exp(x[0], x[1], x[2]);
                GroupElement::unchecked(GroupKind::Se2, m)
            }
            GroupKind::Se3 => {
                let phi = Vector3::new(x[0], x[1], x[2]);
                let c = so3::exp(&phi);
                let j = so3::left_jacobian(&phi);
                let r = j * Vector3::new(x[3], x[4], x[5]);
                let mut m = DMatrix::from_element(4, 4, T::zero());
                set_rot3(&mut m, &c);
                for i in 0..3 {
                    m[(i, 3)] = r[i];
                }
                m[(3, 3)] = T::one();
                GroupElement::unchecked(GroupKind::Se3, m)
            }
            GroupKind::Se23 => {
                let phi = Vector3::new(x[0], x[1], x[2]);
                let c = so3::exp(&phi);
                let j = so3::left_jacobian(&phi);
                let v = j * Vector3::new(x[3], x[4], x[5]);
                let r = j * Vector3::new(x[6], x[7], x[8]);
                let mut m = DMatrix::from_element(5, 5, T::zero());
                set_rot3(&mut m, &c);
                for i in 0..3 {
                    m[(i, 3)] = v[i];
                    m[(i, 4)] = r[i];
                }
                m[(3, 3)] = T::one();
                m[(4, 4)] = T::one();
                GroupElement::unchecked(GroupKind::Se23, m)
            }
            GroupKind::Composite(_) => {
                let blocks = self.split().iter().map(TangentVector::exp).collect();
                GroupElement::pack(blocks).expect("composite tangent is non-empty")
            }
        }
    }
}

/// Vee operator: inverse of [`TangentVector::wedge`]. Checks that the
/// off-pattern real parts are at most `1e-12` in magnitude.
pub fn vee<T: CsScalar>(m: &DMatrix<T>, kind: &GroupKind) -> Result<TangentVector<T>, GroupError> {
    const TOL: f64 = 1e-12;
    let dim = kind.dim();
    if m.nrows() != dim || m.ncols() != dim {
        return Err(GroupError::MatrixShape {
            kind: kind.name(),
            expected: dim,
            got_rows: m.nrows(),
            got_cols: m.ncols(),
        });
    }
    let pattern_err = |row, col| GroupError::AlgebraPattern {
        kind: kind.name(),
        row,
        col,
    };
    // Structural zero rows at the bottom of every pose algebra.
    let zero_rows = match kind {
        GroupKind::So3 => 0,
        GroupKind::Se2 | GroupKind::Se3 => 1,
        GroupKind::Se23 => 2,
        GroupKind::Composite(_) => 0,
    };
    if !kind.is_composite() {
        for r in dim - zero_rows..dim {
            for c in 0..dim {
                if m[(r, c)].real().abs() > TOL {
                    return Err(pattern_err(r, c));
                }
            }
        }
    }
    match kind {
        GroupKind::So3 | GroupKind::Se2 | GroupKind::Se3 | GroupKind::Se23 => {
            // Rotation block: skew symmetry and zero diagonal on real parts.
            let rb = if *kind == GroupKind::Se2 { 2 } else { 3 };
            for r in 0..rb {
                if m[(r, r)].real().abs() > TOL {
                    return Err(pattern_err(r, r));
                }
                for c in r + 1..rb {
                    if (m[(r, c)].real() + m[(c, r)].real()).abs() > TOL {
                        return Err(pattern_err(c, r));
                    }
                }
            }
            let coords = match kind {
                GroupKind::So3 => vec![m[(2, 1)], m[(0, 2)], m[(1, 0)]],
                GroupKind::Se2 => vec![m[(1, 0)], m[(0, 2)], m[(1, 2)]],
                GroupKind::Se3 => vec![
                    m[(2, 1)],
                    m[(0, 2)],
                    m[(1, 0)],
                    m[(0, 3)],
                    m[(1, 3)],
                    m[(2, 3)],
                ],
                GroupKind::Se23 => vec![
                    m[(2, 1)],
                    m[(0, 2)],
                    m[(1, 0)],
                    m[(0, 3)],
                    m[(1, 3)],
                    m[(2, 3)],
                    m[(0, 4)],
                    m[(1, 4)],
                    m[(2, 4)],
                ],
                _ => unreachable!(),
            };
            Ok(TangentVector {
                kind: kind.clone(),
                coords: DVector::from_vec(coords),
            })
        }
        GroupKind::Composite(inner) => {
            let mut coords = Vec::with_capacity(kind.dof());
            let mut row = 0;
            for k in inner {
                let d = k.dim();
                let block = m.view((row, row), (d, d)).into_owned();
                // Off-diagonal blocks must vanish.
                for r in 0..dim {
                    for c in 0..dim {
                        let inside = r >= row && r < row + d && c >= row && c < row + d;
                        if !inside
                            && (r >= row && r < row + d) != (c >= row && c < row + d)
                            && m[(r, c)].real().abs() > TOL
                        {
                            return Err(pattern_err(r, c));
                        }
                    }
                }
                let sub = vee(&block, k)?;
                coords.extend(sub.coords.iter().copied());
                row += d;
            }
            Ok(TangentVector {
                kind: kind.clone(),
                coords: DVector::from_vec(coords),
            })
        }
    }
}

/// A matrix Lie group element: an m x m matrix tagged with its kind.
/// Composite elements store their diagonal blocks rather than the full
/// (mostly zero) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement<T: CsScalar> {
    kind: GroupKind,
    repr: Repr<T>,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr<T: CsScalar> {
    Dense(DMatrix<T>),
    Blocks(Vec<GroupElement<T>>),
}

impl<T: CsScalar> GroupElement<T> {
    pub fn identity(kind: GroupKind) -> Self {
        match kind {
            GroupKind::Composite(inner) => {
                let blocks = inner.into_iter().map(GroupElement::identity).collect();
                GroupElement::pack(blocks).expect("identity composite is non-empty")
            }
            simple => {
                let d = simple.dim();
                GroupElement::unchecked(simple, DMatrix::from_diagonal_element(d, d, T::one()))
            }
        }
    }

    fn unchecked(kind: GroupKind, matrix: DMatrix<T>) -> Self {
        Self {
            kind,
            repr: Repr::Dense(matrix),
        }
    }

    /// Validates and wraps a matrix as a group element. Structural rows are
    /// checked exactly against their `[0 ... 0 1]` pattern and the rotation
    /// block must be orthonormal with unit determinant, both to `1e-9` on
    /// real parts.
    pub fn from_matrix(kind: GroupKind, matrix: DMatrix<T>) -> Result<Self, GroupError> {
        const TOL: f64 = 1e-9;
        if kind.is_composite() {
            return Err(GroupError::UnsupportedKind {
                kind: "composite (use GroupElement::pack)".into(),
            });
        }
        let d = kind.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(GroupError::MatrixShape {
                kind: kind.name(),
                expected: d,
                got_rows: matrix.nrows(),
                got_cols: matrix.ncols(),
            });
        }
        let invalid = |detail: String| GroupError::InvalidElement {
            kind: kind.name(),
            detail,
        };
        let rb = match kind {
            GroupKind::Se2 => 2,
            _ => 3,
        };
        // Structural bottom rows.
        for r in rb..d {
            for c in 0..d {
                let expected = if c == r { 1.0 } else { 0.0 };
                if (matrix[(r, c)].real() - expected).abs() > TOL {
                    return Err(invalid(format!("row {r} is not the affine pattern row")));
                }
            }
        }
        // Rotation block orthonormality and determinant on real parts.
        let c_re =
            DMatrix::<f64>::from_fn(rb, rb, |r, c| matrix[(r, c)].real());
        let gram = &c_re.transpose() * &c_re;
        for r in 0..rb {
            for c in 0..rb {
                let expected = if r == c { 1.0 } else { 0.0 };
                if (gram[(r, c)] - expected).abs() > TOL {
                    return Err(invalid("rotation block is not orthonormal".into()));
                }
            }
        }
        let det = c_re.determinant();
        if (det - 1.0).abs() > TOL {
            return Err(invalid(format!("rotation determinant {det} is not 1")));
        }
        Ok(Self::unchecked(kind, matrix))
    }

    /// Packages a list of elements into one block-diagonal composite
    /// element.
    pub fn pack(blocks: Vec<GroupElement<T>>) -> Result<Self, GroupError> {
        if blocks.is_empty() {
            return Err(GroupError::EmptyComposite);
        }
        let kinds = blocks.iter().map(|b| b.kind.clone()).collect();
        Ok(Self {
            kind: GroupKind::Composite(kinds),
            repr: Repr::Blocks(blocks),
        })
    }

    /// Inverts [`GroupElement::pack`].
    pub fn unpack(self) -> Result<Vec<GroupElement<T>>, GroupError> {
        match self.repr {
            Repr::Blocks(b) => Ok(b),
            Repr::Dense(_) => Err(GroupError::UnsupportedKind {
                kind: format!("{} (not a composite element)", self.kind),
            }),
        }
    }

    /// Diagonal blocks of a composite, or the element itself.
    pub fn blocks(&self) -> &[GroupElement<T>] {
        match &self.repr {
            Repr::Blocks(b) => b,
            Repr::Dense(_) => std::slice::from_ref(self),
        }
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn dof(&self) -> usize {
        self.kind.dof()
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// The full m x m matrix; assembles the block diagonal for composites.
    pub fn matrix(&self) -> DMatrix<T> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Blocks(blocks) => {
                let d = self.kind.dim();
                let mut m = DMatrix::from_element(d, d, T::zero());
                let mut off = 0;
                for b in blocks {
                    let bm = b.matrix();
                    m.view_mut((off, off), (b.dim(), b.dim())).copy_from(&bm);
                    off += b.dim();
                }
                m
            }
        }
    }

    /// Borrow of the dense matrix of a non-composite element.
    pub fn matrix_ref(&self) -> &DMatrix<T> {
        match &self.repr {
            Repr::Dense(m) => m,
            Repr::Blocks(_) => panic!("matrix_ref on composite element; use matrix()"),
        }
    }

    /// Group composition (blockwise for composites).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(
            self.kind, other.kind,
            "compose: kind mismatch {} vs {}",
            self.kind, other.kind
        );
        match (&self.repr, &other.repr) {
            (Repr::Dense(a), Repr::Dense(b)) => Self::unchecked(self.kind.clone(), a * b),
            (Repr::Blocks(a), Repr::Blocks(b)) => {
                let blocks = a.iter().zip(b).map(|(x, y)| x.compose(y)).collect();
                Self::pack(blocks).expect("composite blocks are non-empty")
            }
            _ => unreachable!("equal kinds imply equal representations"),
        }
    }

    /// Closed-form inverse: transpose of the rotation block, negated-rotated
    /// translation and velocity columns.
    pub fn inverse(&self) -> Self {
        match &self.repr {
            Repr::Blocks(blocks) => {
                let inv = blocks.iter().map(GroupElement::inverse).collect();
                Self::pack(inv).expect("composite blocks are non-empty")
            }
            Repr::Dense(m) => {
                let inv = match self.kind {
                    GroupKind::So3 => m.transpose(),
                    GroupKind::Se2 => {
                        let mut out = DMatrix::from_element(3, 3, T::zero());
                        for r in 0..2 {
                            for c in 0..2 {
                                out[(r, c)] = m[(c, r)];
                            }
                        }
                        for r in 0..2 {
                            out[(r, 2)] = -(out[(r, 0)] * m[(0, 2)] + out[(r, 1)] * m[(1, 2)]);
                        }
                        out[(2, 2)] = T::one();
                        out
                    }
                    GroupKind::Se3 | GroupKind::Se23 => {
                        let d = self.kind.dim();
                        let mut out = DMatrix::from_element(d, d, T::zero());
                        for r in 0..3 {
                            for c in 0..3 {
                                out[(r, c)] = m[(c, r)];
                            }
                        }
                        for col in 3..d {
                            for r in 0..3 {
                                let mut acc = T::zero();
                                for k in 0..3 {
                                    acc += out[(r, k)] * m[(k, col)];
                                }
                                out[(r, col)] = -acc;
                            }
                            out[(col, col)] = T::one();
                        }
                        out
                    }
                    GroupKind::Composite(_) => unreachable!(),
                };
                Self::unchecked(self.kind.clone(), inv)
            }
        }
    }

    /// Logarithmic map; inverse of [`TangentVector::exp`].
    ///
    /// SO(3)-based kinds reject rotation angles within `1e-9` of pi, where
    /// the acos-based form is ill conditioned. The SE(2) logarithm uses the
    /// complexified `atan2` and is well conditioned on the whole group.
    pub fn log(&self) -> Result<TangentVector<T>, GroupError> {
        match &self.repr {
            Repr::Blocks(blocks) => {
                let mut coords = Vec::with_capacity(self.dof());
                for b in blocks {
                    coords.extend(b.log()?.coords.iter().copied());
                }
                Ok(TangentVector {
                    kind: self.kind.clone(),
                    coords: DVector::from_vec(coords),
                })
            }
            Repr::Dense(m) => {
                let coords = match self.kind {
                    GroupKind::So3 => {
                        let phi = so3::log(&rot3(m))?;
                        vec![phi[0], phi[1], phi[2]]
                    }
                    GroupKind::Se2 => se2::log(m)?,
                    GroupKind::Se3 => {
                        let phi = so3::log(&rot3(m))?;
                        let jinv = so3::left_jacobian_inv(&phi);
                        let r = jinv * Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
                        vec![phi[0], phi[1], phi[2], r[0], r[1], r[2]]
                    }
                    GroupKind::Se23 => {
                        let phi = so3::log(&rot3(m))?;
                        let jinv = so3::left_jacobian_inv(&phi);
                        let v = jinv * Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
                        let r = jinv * Vector3::new(m[(0, 4)], m[(1, 4)], m[(2, 4)]);
                        vec![
                            phi[0], phi[1], phi[2], v[0], v[1], v[2], r[0], r[1], r[2],
                        ]
                    }
                    GroupKind::Composite(_) => unreachable!(),
                };
                Ok(TangentVector {
                    kind: self.kind.clone(),
                    coords: DVector::from_vec(coords),
                })
            }
        }
    }

    /// Adjoint representation: the n x n matrix with
    /// `(adjoint(X) zeta)^wedge = X zeta^wedge X^-1`.
    pub fn adjoint(&self) -> DMatrix<T> {
        match &self.repr {
            Repr::Blocks(blocks) => {
                let n = self.dof();
                let mut ad = DMatrix::from_element(n, n, T::zero());
                let mut off = 0;
                for b in blocks {
                    let sub = b.adjoint();
                    ad.view_mut((off, off), (b.dof(), b.dof())).copy_from(&sub);
                    off += b.dof();
                }
                ad
            }
            Repr::Dense(m) => match self.kind {
                GroupKind::So3 => m.clone(),
                GroupKind::Se2 => {
                    let mut ad = DMatrix::from_element(3, 3, T::zero());
                    ad[(0, 0)] = T::one();
                    ad[(1, 0)] = m[(1, 2)];
                    ad[(2, 0)] = -m[(0, 2)];
                    for r in 0..2 {
                        for c in 0..2 {
                            ad[(r + 1, c + 1)] = m[(r, c)];
                        }
                    }
                    ad
                }
                GroupKind::Se3 | GroupKind::Se23 => {
                    let n = self.dof();
                    let c = rot3(m);
                    let mut ad = DMatrix::from_element(n, n, T::zero());
                    set_block3(&mut ad, 0, 0, &c);
                    for (slot, col) in (3..self.dim()).enumerate() {
                        let p = Vector3::new(m[(0, col)], m[(1, col)], m[(2, col)]);
                        let px_c = so3::skew(&p) * c;
                        let row = 3 * (slot + 1);
                        set_block3(&mut ad, row, 0, &px_c);
                        set_block3(&mut ad, row, row, &c);
                    }
                    ad
                }
                GroupKind::Composite(_) => unreachable!(),
            },
        }
    }
}

impl GroupElement<f64> {
    /// Casts into any complex-capable scalar (typically `Complex64`),
    /// zero-filling the imaginary parts.
    pub fn cast<T: CsScalar>(&self) -> GroupElement<T> {
        match &self.repr {
            Repr::Dense(m) => GroupElement::unchecked(
                self.kind.clone(),
                DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| T::from_real(m[(r, c)])),
            ),
            Repr::Blocks(blocks) => {
                GroupElement::pack(blocks.iter().map(|b| b.cast()).collect())
                    .expect("composite blocks are non-empty")
            }
        }
    }

    /// Shorthand for the complex-step instantiation.
    pub fn complexify(&self) -> GroupElement<Complex64> {
        self.cast()
    }
}

impl TangentVector<f64> {
    pub fn cast<T: CsScalar>(&self) -> TangentVector<T> {
        TangentVector {
            kind: self.kind.clone(),
            coords: self.coords.map(T::from_real),
        }
    }
}

impl<'a, T: CsScalar> std::ops::Mul for &'a GroupElement<T> {
    type Output = GroupElement<T>;

    fn mul(self, rhs: &'a GroupElement<T>) -> GroupElement<T> {
        self.compose(rhs)
    }
}

/// Constructors for the concrete pose kinds.
impl<T: CsScalar> GroupElement<T> {
    pub fn se2_from_parts(theta: T, xy: &Vector2<T>) -> Self {
        let mut m = DMatrix::from_element(3, 3, T::zero());
        let (s, c) = (theta.cs_sin(), theta.cs_cos());
        m[(0, 0)] = c;
        m[(0, 1)] = -s;
        m[(1, 0)] = s;
        m[(1, 1)] = c;
        m[(0, 2)] = xy[0];
        m[(1, 2)] = xy[1];
        m[(2, 2)] = T::one();
        Self::unchecked(GroupKind::Se2, m)
    }

    pub fn se3_from_parts(c: &Matrix3<T>, r: &Vector3<T>) -> Self {
        let mut m = DMatrix::from_element(4, 4, T::zero());
        set_rot3(&mut m, c);
        for i in 0..3 {
            m[(i, 3)] = r[i];
        }
        m[(3, 3)] = T::one();
        Self::unchecked(GroupKind::Se3, m)
    }

    pub fn se23_from_parts(c: &Matrix3<T>, v: &Vector3<T>, r: &Vector3<T>) -> Self {
        let mut m = DMatrix::from_element(5, 5, T::zero());
        set_rot3(&mut m, c);
        for i in 0..3 {
            m[(i, 3)] = v[i];
            m[(i, 4)] = r[i];
        }
        m[(3, 3)] = T::one();
        m[(4, 4)] = T::one();
        Self::unchecked(GroupKind::Se23, m)
    }

    /// 3x3 rotation block of an SO(3)/SE(3)/SE_2(3) element.
    pub fn rotation3(&self) -> Matrix3<T> {
        rot3(self.matrix_ref())
    }

    /// Column `dim - (cols_from_right + 1)` of the affine part, e.g. the
    /// position column of SE(3)/SE_2(3).
    fn affine_col3(&self, col: usize) -> Vector3<T> {
        let m = self.matrix_ref();
        Vector3::new(m[(0, col)], m[(1, col)], m[(2, col)])
    }

    pub fn se23_velocity(&self) -> Vector3<T> {
        assert_eq!(self.kind, GroupKind::Se23);
        self.affine_col3(3)
    }

    pub fn se23_position(&self) -> Vector3<T> {
        assert_eq!(self.kind, GroupKind::Se23);
        self.affine_col3(4)
    }

    pub fn se3_position(&self) -> Vector3<T> {
        assert_eq!(self.kind, GroupKind::Se3);
        self.affine_col3(3)
    }

    pub fn se2_position(&self) -> Vector2<T> {
        assert_eq!(self.kind, GroupKind::Se2);
        let m = self.matrix_ref();
        Vector2::new(m[(0, 2)], m[(1, 2)])
    }

    /// SE(2) heading through the group log (complexified atan2), so the
    /// complex-step signal propagates.
    pub fn se2_heading(&self) -> Result<T, GroupError> {
        assert_eq!(self.kind, GroupKind::Se2);
        Ok(self.log()?.coords()[0])
    }
}

/// The `p^odot` rearrangement with `x^wedge p = p^odot x`, defined for the
/// homogeneous-point kinds SE(3) (p in R^4 -> 4 x 6) and SE_2(3)
/// (p in R^5 -> 5 x 9).
pub fn odot<T: CsScalar>(p: &DVector<T>, kind: &GroupKind) -> Result<DMatrix<T>, GroupError> {
    match kind {
        GroupKind::Se3 | GroupKind::Se23 => {
            let dim = kind.dim();
            if p.len() != dim {
                return Err(GroupError::DimensionMismatch {
                    kind: kind.name(),
                    expected: dim,
                    got: p.len(),
                });
            }
            let n = kind.dof();
            let eps = Vector3::new(p[0], p[1], p[2]);
            let neg_skew = -so3::skew(&eps);
            let mut m = DMatrix::from_element(dim, n, T::zero());
            set_block3(&mut m, 0, 0, &neg_skew);
            for (slot, eta_idx) in (3..dim).enumerate() {
                let eta = p[eta_idx];
                for r in 0..3 {
                    m[(r, 3 * (slot + 1) + r)] = eta;
                }
            }
            Ok(m)
        }
        other => Err(GroupError::UnsupportedKind { kind: other.name() }),
    }
}

fn rot3<T: CsScalar>(m: &DMatrix<T>) -> Matrix3<T> {
    Matrix3::from_fn(|r, c| m[(r, c)])
}

fn dmat_from3<T: CsScalar>(m: &Matrix3<T>) -> DMatrix<T> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

fn set_rot3<T: CsScalar>(m: &mut DMatrix<T>, c: &Matrix3<T>) {
    for r in 0..3 {
        for col in 0..3 {
            m[(r, col)] = c[(r, col)];
        }
    }
}

fn set_block3<T: CsScalar>(m: &mut DMatrix<T>, row: usize, col: usize, b: &Matrix3<T>) {
    for r in 0..3 {
        for c in 0..3 {
            m[(row + r, col + c)] = b[(r, c)];
        }
    }
}

#[cfg(test)]
mod tests;
