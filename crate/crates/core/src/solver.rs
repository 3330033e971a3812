//! Gauss-Newton for weighted nonlinear least squares over Lie-group-valued
//! states: on-manifold updates, pluggable Jacobian backends, and dense or
//! block-tridiagonal normal equations.
//!
//! No damping and no line search; the cost is allowed to rise on early
//! iterations (it does, from a dead-reckoned start).

use crate::cstep::{self, CstepError, GroupFunction, Side};
use crate::groups::{GroupElement, GroupKind, TangentVector};
use crate::scalar::CsScalar;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Residual structure of a least-squares problem: a stack of error blocks,
/// each depending on a small set of states.
pub trait Residuals {
    /// Kind of each state, in order.
    fn state_kinds(&self) -> Vec<GroupKind>;

    fn num_blocks(&self) -> usize;

    fn block_dim(&self, block: usize) -> usize;

    /// State indices this block depends on, strictly ascending.
    fn block_deps(&self, block: usize) -> Vec<usize>;

    /// Evaluates one error block given references to its dependent states
    /// (in `block_deps` order).
    fn eval_block<T: CsScalar>(&self, block: usize, deps: &[&GroupElement<T>]) -> DVector<T>;

    /// Analytic Jacobian of `block` with respect to its `slot`-th dependency,
    /// if one is available for this perturbation side.
    fn analytic_jacobian_block(
        &self,
        block: usize,
        slot: usize,
        deps: &[&GroupElement<f64>],
        side: Side,
    ) -> Option<DMatrix<f64>> {
        let _ = (block, slot, deps, side);
        None
    }
}

/// How Jacobians are produced inside the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianBackend {
    ComplexStep,
    Central,
    Analytic,
}

/// How the normal equations are assembled and factored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Full Jacobian of the stacked error over the composite state.
    Dense,
    /// Per-block Jacobians assembled into a block-tridiagonal Hessian,
    /// factored in O(K).
    SparseBlock,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Terminate when the step norm drops below this.
    pub step_tolerance: f64,
    /// Terminate when |cost change| between iterations drops below this.
    pub cost_tolerance: f64,
    /// Complex-step size.
    pub step_size: f64,
    /// Step for the central-difference backend (needs a much larger value).
    pub central_step_size: f64,
    pub backend: JacobianBackend,
    pub linear_solver: LinearSolverKind,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            step_size: cstep::DEFAULT_STEP,
            central_step_size: 1e-6,
            backend: JacobianBackend::ComplexStep,
            linear_solver: LinearSolverKind::Dense,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("weight block {block} is not symmetric positive definite (pivot {pivot:.3e})")]
    NonSpdWeight { block: usize, pivot: f64 },
    #[error("expected {expected} weight blocks, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weight block {block} is {got}x{got}, expected {expected}x{expected}")]
    WeightDim {
        block: usize,
        expected: usize,
        got: usize,
    },
    #[error("singular normal-equations matrix: smallest pivot {pivot:.3e}")]
    SingularNormal { pivot: f64 },
    #[error("residual block {block} returned a non-finite value")]
    NonFiniteResidual { block: usize },
    #[error("cost is not finite")]
    NonFiniteCost,
    #[error("no analytic Jacobian available for block {block}, slot {slot}")]
    MissingAnalyticJacobian { block: usize, slot: usize },
    #[error("block {block} dependencies {deps:?} are not consecutive (block-tridiagonal solver)")]
    NotBlockTridiagonal { block: usize, deps: Vec<usize> },
    #[error("declared sparsity violated: block {block} has signal outside its dependencies")]
    InconsistentDependencies { block: usize },
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Jacobian(#[from] CstepError),
}

/// A weighted nonlinear least-squares problem over group-valued states.
pub struct LeastSquaresProblem<R: Residuals> {
    residuals: R,
    weights: Vec<DMatrix<f64>>,
    initial: GroupElement<f64>,
    side: Side,
}

impl<R: Residuals> LeastSquaresProblem<R> {
    /// Validates weight shapes and positive definiteness (Cholesky must
    /// succeed on every block).
    pub fn new(
        residuals: R,
        weights: Vec<DMatrix<f64>>,
        initial: GroupElement<f64>,
        side: Side,
    ) -> Result<Self, SolverError> {
        let expected = residuals.num_blocks();
        if weights.len() != expected {
            return Err(SolverError::WeightCount {
                expected,
                got: weights.len(),
            });
        }
        for (b, w) in weights.iter().enumerate() {
            let dim = residuals.block_dim(b);
            if w.nrows() != dim || w.ncols() != dim {
                return Err(SolverError::WeightDim {
                    block: b,
                    expected: dim,
                    got: w.nrows(),
                });
            }
            if let Err(pivot) = cholesky_lower(w) {
                return Err(SolverError::NonSpdWeight { block: b, pivot });
            }
        }
        Ok(Self {
            residuals,
            weights,
            initial,
            side,
        })
    }

    pub fn residuals(&self) -> &R {
        &self.residuals
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn initial(&self) -> &GroupElement<f64> {
        &self.initial
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Total residual dimension q.
    pub fn residual_dim(&self) -> usize {
        (0..self.residuals.num_blocks())
            .map(|b| self.residuals.block_dim(b))
            .sum()
    }

    fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.residuals.num_blocks());
        let mut acc = 0;
        for b in 0..self.residuals.num_blocks() {
            offsets.push(acc);
            acc += self.residuals.block_dim(b);
        }
        offsets
    }

    fn state_offsets(&self) -> Vec<usize> {
        let kinds = self.residuals.state_kinds();
        let mut offsets = Vec::with_capacity(kinds.len());
        let mut acc = 0;
        for k in &kinds {
            offsets.push(acc);
            acc += k.dof();
        }
        offsets
    }

    fn eval_blocks<T: CsScalar>(
        &self,
        state: &GroupElement<T>,
    ) -> Result<Vec<DVector<T>>, SolverError> {
        let blocks = state.blocks();
        let mut out = Vec::with_capacity(self.residuals.num_blocks());
        for b in 0..self.residuals.num_blocks() {
            let deps: Vec<&GroupElement<T>> = self
                .residuals
                .block_deps(b)
                .iter()
                .map(|&j| &blocks[j])
                .collect();
            let e = self.residuals.eval_block(b, &deps);
            if e.iter().any(|x| !x.cs_is_finite()) {
                return Err(SolverError::NonFiniteResidual { block: b });
            }
            out.push(e);
        }
        Ok(out)
    }
}

/// One Gauss-Newton iteration summary.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost at the linearization point (before the update of this
    /// iteration was applied).
    pub cost: f64,
    pub step_norm: f64,
    /// Error-function evaluations spent on the Jacobian this iteration.
    pub jacobian_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub state: GroupElement<f64>,
    pub history: Vec<IterationRecord>,
}

/// `J(x) = 1/2 e(x)^T W e(x)`.
pub fn cost<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
) -> Result<f64, SolverError> {
    let residuals = problem.eval_blocks(state)?;
    let mut acc = 0.0;
    for (e, w) in residuals.iter().zip(&problem.weights) {
        acc += 0.5 * (e.transpose() * w * e)[(0, 0)];
    }
    if !acc.is_finite() {
        return Err(SolverError::NonFiniteCost);
    }
    Ok(acc)
}

/// On-manifold update: `X exp(delta^wedge)` (right) or
/// `exp(delta^wedge) X` (left). Composite states update blockwise.
pub fn apply_update(
    state: &GroupElement<f64>,
    delta: &TangentVector<f64>,
    side: Side,
) -> GroupElement<f64> {
    assert_eq!(
        state.kind(),
        delta.kind(),
        "apply_update: state/step kind mismatch"
    );
    match side {
        Side::Right => state.compose(&delta.exp()),
        Side::Left => delta.exp().compose(state),
    }
}

/// Adapter presenting the stacked error as a single function of the
/// (composite) state, for the dense full-Jacobian route.
struct StackFunction<'a, R: Residuals> {
    problem: &'a LeastSquaresProblem<R>,
    q: usize,
}

impl<R: Residuals> GroupFunction for StackFunction<'_, R> {
    fn output_dim(&self) -> usize {
        self.q
    }

    fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
        let blocks = x.blocks();
        let r = &self.problem.residuals;
        let mut out = DVector::from_element(self.q, T::zero());
        let mut offset = 0;
        for b in 0..r.num_blocks() {
            let deps: Vec<&GroupElement<T>> =
                r.block_deps(b).iter().map(|&j| &blocks[j]).collect();
            let e = r.eval_block(b, &deps);
            out.rows_mut(offset, e.len()).copy_from(&e);
            offset += e.len();
        }
        out
    }
}

/// Naive lower Cholesky that reports the offending pivot on failure.
fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d <= 0.0 {
            return Err(d);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

fn solve_cholesky(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
    let l = cholesky_lower(h).map_err(|pivot| SolverError::SingularNormal { pivot })?;
    let y = l
        .solve_lower_triangular(rhs)
        .ok_or(SolverError::SingularNormal { pivot: 0.0 })?;
    l.transpose()
        .solve_upper_triangular(&y)
        .ok_or(SolverError::SingularNormal { pivot: 0.0 })
}

/// Block-tridiagonal symmetric system: diagonal blocks `diag[s]`, and
/// sub-diagonal blocks `sub[s] = H[s+1, s]`.
pub struct BlockTridiagonalSystem {
    pub diag: Vec<DMatrix<f64>>,
    pub sub: Vec<DMatrix<f64>>,
    pub rhs: DVector<f64>,
    offsets: Vec<usize>,
}

struct BlockCholesky {
    /// Lower Cholesky factor of each (Schur-reduced) diagonal block.
    factors: Vec<DMatrix<f64>>,
    /// `C_s = E_s M_{s-1}^{-T}` so that `L` is block bidiagonal with
    /// `L[s][s] = M_s` and `L[s+1][s] = C_{s+1}`.
    couplings: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalSystem {
    /// Densifies the system (used as an oracle in tests).
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.rhs.len();
        let mut h = DMatrix::zeros(n, n);
        for (s, d) in self.diag.iter().enumerate() {
            let o = self.offsets[s];
            h.view_mut((o, o), (d.nrows(), d.ncols())).copy_from(d);
        }
        for (s, e) in self.sub.iter().enumerate() {
            let (ro, co) = (self.offsets[s + 1], self.offsets[s]);
            h.view_mut((ro, co), (e.nrows(), e.ncols())).copy_from(e);
            h.view_mut((co, ro), (e.ncols(), e.nrows()))
                .copy_from(&e.transpose());
        }
        (h, self.rhs.clone())
    }

    fn factor(&self) -> Result<BlockCholesky, SolverError> {
        let s_count = self.diag.len();
        let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(s_count);
        let mut couplings: Vec<DMatrix<f64>> = Vec::with_capacity(s_count.saturating_sub(1));
        for s in 0..s_count {
            let mut d = self.diag[s].clone();
            if s > 0 {
                // C_s = E_s M_{s-1}^{-T};  D~_s = D_s - C_s C_s^T
                let e = &self.sub[s - 1];
                let m_prev = &factors[s - 1];
                let x = m_prev
                    .solve_lower_triangular(&e.transpose())
                    .ok_or(SolverError::SingularNormal { pivot: 0.0 })?;
                let c = x.transpose();
                d -= &c * c.transpose();
                couplings.push(c);
            }
            let m = cholesky_lower(&d).map_err(|pivot| SolverError::SingularNormal { pivot })?;
            factors.push(m);
        }
        Ok(BlockCholesky { factors, couplings })
    }

    /// Blockwise Cholesky solve in O(K) for bandwidth-1 block systems.
    pub fn solve(&self) -> Result<DVector<f64>, SolverError> {
        let s_count = self.diag.len();
        let BlockCholesky { factors, couplings } = self.factor()?;
        // Forward pass: L y = rhs.
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(s_count);
        for s in 0..s_count {
            let o = self.offsets[s];
            let n = self.diag[s].nrows();
            let mut b = self.rhs.rows(o, n).into_owned();
            if s > 0 {
                b -= &couplings[s - 1] * &y[s - 1];
            }
            let ys = factors[s]
                .solve_lower_triangular(&b)
                .ok_or(SolverError::SingularNormal { pivot: 0.0 })?;
            y.push(ys);
        }
        // Backward pass: L^T x = y.
        let mut x: Vec<DVector<f64>> = vec![DVector::zeros(0); s_count];
        for s in (0..s_count).rev() {
            let mut b = y[s].clone();
            if s + 1 < s_count {
                b -= couplings[s].transpose() * &x[s + 1];
            }
            let xs = factors[s]
                .transpose()
                .solve_upper_triangular(&b)
                .ok_or(SolverError::SingularNormal { pivot: 0.0 })?;
            x[s] = xs;
        }
        let mut out = DVector::zeros(self.rhs.len());
        for s in 0..s_count {
            let o = self.offsets[s];
            out.rows_mut(o, x[s].len()).copy_from(&x[s]);
        }
        Ok(out)
    }

    /// Diagonal blocks of the inverse, in O(K): with `H = L L^T` block
    /// bidiagonal, `Sigma_ss = M_s^-T W_s M_s^-1` where `W_s` follows the
    /// backward recursion `W_s = I + T_{s+1}^T W_{s+1} T_{s+1}`,
    /// `T_s = M_s^-1 C_s`.
    pub fn diagonal_inverse_blocks(&self) -> Result<Vec<DMatrix<f64>>, SolverError> {
        let s_count = self.diag.len();
        let BlockCholesky { factors, couplings } = self.factor()?;
        let singular = || SolverError::SingularNormal { pivot: 0.0 };
        let mut out = vec![DMatrix::zeros(0, 0); s_count];
        let mut w = DMatrix::identity(
            self.diag[s_count - 1].nrows(),
            self.diag[s_count - 1].nrows(),
        );
        for s in (0..s_count).rev() {
            if s + 1 < s_count {
                let t = factors[s + 1]
                    .solve_lower_triangular(&couplings[s])
                    .ok_or_else(singular)?;
                let n = self.diag[s].nrows();
                w = DMatrix::identity(n, n) + t.transpose() * &w * t;
            }
            // Sigma_ss = M_s^-T W_s M_s^-1: two upper-triangular solves.
            let mt = factors[s].transpose();
            let a = mt.solve_upper_triangular(&w).ok_or_else(singular)?;
            let sigma_t = mt
                .solve_upper_triangular(&a.transpose())
                .ok_or_else(singular)?;
            out[s] = sigma_t.transpose();
        }
        Ok(out)
    }
}

/// Per-block Jacobians with respect to each dependent state.
struct BlockJacobians {
    /// `jac[b][slot]` is the Jacobian of block `b` wrt its `slot`-th dep.
    jac: Vec<Vec<DMatrix<f64>>>,
    evaluations: usize,
}

fn block_jacobians<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<BlockJacobians, SolverError> {
    let r = &problem.residuals;
    let blocks_real = state.blocks();
    let blocks_complex: Vec<GroupElement<Complex64>> =
        blocks_real.iter().map(|b| b.complexify()).collect();
    let mut jac = Vec::with_capacity(r.num_blocks());
    let mut evaluations = 0usize;
    for b in 0..r.num_blocks() {
        let deps = r.block_deps(b);
        let q = r.block_dim(b);
        let mut per_slot = Vec::with_capacity(deps.len());
        for (slot, &j) in deps.iter().enumerate() {
            let n = blocks_real[j].dof();
            let jb = match options.backend {
                JacobianBackend::ComplexStep => {
                    let h = options.step_size;
                    let mut m = DMatrix::zeros(q, n);
                    for i in 0..n {
                        let eps = TangentVector::<Complex64>::basis(
                            blocks_real[j].kind().clone(),
                            i,
                            Complex64::new(0.0, h),
                        );
                        let perturbed = match problem.side {
                            Side::Right => blocks_complex[j].compose(&eps.exp()),
                            Side::Left => eps.exp().compose(&blocks_complex[j]),
                        };
                        let dep_refs: Vec<&GroupElement<Complex64>> = deps
                            .iter()
                            .enumerate()
                            .map(|(s2, &j2)| {
                                if s2 == slot {
                                    &perturbed
                                } else {
                                    &blocks_complex[j2]
                                }
                            })
                            .collect();
                        let e = r.eval_block(b, &dep_refs);
                        evaluations += 1;
                        for row in 0..q {
                            if !e[row].cs_is_finite() {
                                return Err(SolverError::NonFiniteResidual { block: b });
                            }
                            m[(row, i)] = e[row].im / h;
                        }
                    }
                    m
                }
                JacobianBackend::Central => {
                    let h = options.central_step_size;
                    let mut m = DMatrix::zeros(q, n);
                    for i in 0..n {
                        let mut col = DVector::zeros(q);
                        for &sign in &[1.0, -1.0] {
                            let eps = TangentVector::<f64>::basis(
                                blocks_real[j].kind().clone(),
                                i,
                                sign * h,
                            );
                            let perturbed = match problem.side {
                                Side::Right => blocks_real[j].compose(&eps.exp()),
                                Side::Left => eps.exp().compose(&blocks_real[j]),
                            };
                            let dep_refs: Vec<&GroupElement<f64>> = deps
                                .iter()
                                .enumerate()
                                .map(|(s2, &j2)| {
                                    if s2 == slot {
                                        &perturbed
                                    } else {
                                        &blocks_real[j2]
                                    }
                                })
                                .collect();
                            let e = r.eval_block(b, &dep_refs);
                            evaluations += 1;
                            if e.iter().any(|x| !x.is_finite()) {
                                return Err(SolverError::NonFiniteResidual { block: b });
                            }
                            col += e * (sign / (2.0 * h));
                        }
                        m.set_column(i, &col);
                    }
                    m
                }
                JacobianBackend::Analytic => {
                    let dep_refs: Vec<&GroupElement<f64>> =
                        deps.iter().map(|&j2| &blocks_real[j2]).collect();
                    r.analytic_jacobian_block(b, slot, &dep_refs, problem.side)
                        .ok_or(SolverError::MissingAnalyticJacobian { block: b, slot })?
                }
            };
            per_slot.push(jb);
        }
        jac.push(per_slot);
    }
    Ok(BlockJacobians { jac, evaluations })
}

/// Assembles the block-tridiagonal normal equations
/// `(J^T W J) delta = -J^T W e` from per-block Jacobians, exploiting that
/// every error block depends on at most two consecutive states.
pub fn assemble_sparse_normal<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<(BlockTridiagonalSystem, usize), SolverError> {
    let r = &problem.residuals;
    let kinds = r.state_kinds();
    let offsets = problem.state_offsets();
    for b in 0..r.num_blocks() {
        let deps = r.block_deps(b);
        let consecutive = match deps.len() {
            1 => true,
            2 => deps[1] == deps[0] + 1,
            _ => false,
        };
        if !consecutive {
            return Err(SolverError::NotBlockTridiagonal { block: b, deps });
        }
    }
    let residuals = problem.eval_blocks(state)?;
    let jacs = block_jacobians(problem, state, options)?;
    let mut diag: Vec<DMatrix<f64>> = kinds
        .iter()
        .map(|k| DMatrix::zeros(k.dof(), k.dof()))
        .collect();
    let mut sub: Vec<DMatrix<f64>> = kinds
        .windows(2)
        .map(|w| DMatrix::zeros(w[1].dof(), w[0].dof()))
        .collect();
    let total: usize = kinds.iter().map(GroupKind::dof).sum();
    let mut rhs = DVector::zeros(total);
    for b in 0..r.num_blocks() {
        let deps = r.block_deps(b);
        let w = &problem.weights[b];
        let e = &residuals[b];
        let weighted: Vec<DMatrix<f64>> = jacs.jac[b].iter().map(|j| w * j).collect();
        for (slot, &j_state) in deps.iter().enumerate() {
            let jt = jacs.jac[b][slot].transpose();
            let mut seg = rhs.rows_mut(offsets[j_state], kinds[j_state].dof());
            seg -= &jt * (w * e);
            for (slot2, &j2_state) in deps.iter().enumerate() {
                let contrib = &jt * &weighted[slot2];
                if j_state == j2_state {
                    diag[j_state] += contrib;
                } else if j_state > j2_state {
                    sub[j2_state] += contrib;
                }
            }
        }
    }
    // In debug builds on small problems, verify the declared sparsity
    // against the dense complex-step Jacobian of the full stack.
    #[cfg(debug_assertions)]
    if total <= 200 && options.backend == JacobianBackend::ComplexStep {
        verify_declared_sparsity(problem, state, options)?;
    }
    Ok((
        BlockTridiagonalSystem {
            diag,
            sub,
            rhs,
            offsets,
        },
        jacs.evaluations,
    ))
}

#[cfg(debug_assertions)]
fn verify_declared_sparsity<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<(), SolverError> {
    let r = &problem.residuals;
    let stack = StackFunction {
        problem,
        q: problem.residual_dim(),
    };
    let full = match problem.side {
        Side::Right => cstep::jacobian_right(&stack, state, options.step_size)?,
        Side::Left => cstep::jacobian_left(&stack, state, options.step_size)?,
    };
    let kinds = r.state_kinds();
    let state_offsets = problem.state_offsets();
    let block_offsets = problem.block_offsets();
    let scale = full.matrix.amax().max(1.0);
    for b in 0..r.num_blocks() {
        let deps = r.block_deps(b);
        for (s, k) in kinds.iter().enumerate() {
            if deps.contains(&s) {
                continue;
            }
            let view = full.matrix.view(
                (block_offsets[b], state_offsets[s]),
                (r.block_dim(b), k.dof()),
            );
            if view.amax() > 1e-12 * scale {
                return Err(SolverError::InconsistentDependencies { block: b });
            }
        }
    }
    Ok(())
}

struct StepOutcome {
    delta: TangentVector<f64>,
    cost: f64,
    jacobian_evaluations: usize,
}

fn compute_step<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<StepOutcome, SolverError> {
    let current_cost = cost(problem, state)?;
    let (delta_coords, evals) = match options.linear_solver {
        LinearSolverKind::SparseBlock => {
            let (system, evals) = assemble_sparse_normal(problem, state, options)?;
            (system.solve()?, evals)
        }
        LinearSolverKind::Dense => {
            let q = problem.residual_dim();
            let stack = StackFunction { problem, q };
            let (jac, evals) = match options.backend {
                JacobianBackend::ComplexStep => {
                    let j = match problem.side {
                        Side::Right => cstep::jacobian_right(&stack, state, options.step_size)?,
                        Side::Left => cstep::jacobian_left(&stack, state, options.step_size)?,
                    };
                    (j.matrix, j.evaluations)
                }
                JacobianBackend::Central => {
                    let j =
                        cstep::jacobian_central(&stack, state, options.central_step_size, problem.side)?;
                    (j.matrix, j.evaluations)
                }
                JacobianBackend::Analytic => (
                    analytic_jacobian_dense(&problem.residuals, state, problem.side)?,
                    0,
                ),
            };
            let residuals = problem.eval_blocks(state)?;
            let offsets = problem.block_offsets();
            // Row-block application of the block-diagonal weight.
            let mut weighted_jac = DMatrix::zeros(q, jac.ncols());
            let mut weighted_err = DVector::zeros(q);
            for b in 0..problem.residuals.num_blocks() {
                let dim = problem.residuals.block_dim(b);
                let w = &problem.weights[b];
                let rows = jac.rows(offsets[b], dim);
                weighted_jac
                    .rows_mut(offsets[b], dim)
                    .copy_from(&(w * rows));
                weighted_err
                    .rows_mut(offsets[b], dim)
                    .copy_from(&(w * &residuals[b]));
            }
            let h = jac.transpose() * weighted_jac;
            let rhs = -(jac.transpose() * weighted_err);
            (solve_cholesky(&h, &rhs)?, evals)
        }
    };
    let delta = TangentVector::from_coords(state.kind().clone(), delta_coords)
        .expect("normal equations sized by the state dof");
    Ok(StepOutcome {
        delta,
        cost: current_cost,
        jacobian_evaluations: evals,
    })
}

/// Dense Jacobian of the stacked error assembled from the analytic blocks
/// declared by the residual structure.
pub fn analytic_jacobian_dense<R: Residuals>(
    residuals: &R,
    state: &GroupElement<f64>,
    side: Side,
) -> Result<DMatrix<f64>, SolverError> {
    let blocks = state.blocks();
    let kinds = residuals.state_kinds();
    let mut state_offsets = Vec::with_capacity(kinds.len());
    let mut total = 0;
    for k in &kinds {
        state_offsets.push(total);
        total += k.dof();
    }
    let mut block_offsets = Vec::with_capacity(residuals.num_blocks());
    let mut q = 0;
    for b in 0..residuals.num_blocks() {
        block_offsets.push(q);
        q += residuals.block_dim(b);
    }
    let mut jac = DMatrix::zeros(q, total);
    for b in 0..residuals.num_blocks() {
        let deps = residuals.block_deps(b);
        let dep_refs: Vec<&GroupElement<f64>> = deps.iter().map(|&j| &blocks[j]).collect();
        for (slot, &j) in deps.iter().enumerate() {
            let block = residuals
                .analytic_jacobian_block(b, slot, &dep_refs, side)
                .ok_or(SolverError::MissingAnalyticJacobian { block: b, slot })?;
            jac.view_mut(
                (block_offsets[b], state_offsets[j]),
                (residuals.block_dim(b), kinds[j].dof()),
            )
            .copy_from(&block);
        }
    }
    Ok(jac)
}

/// One Gauss-Newton step `delta = (J^T W J)^-1 (-J^T W e)` at `state`.
pub fn gauss_newton_step<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<(TangentVector<f64>, IterationRecord), SolverError> {
    validate_options(options)?;
    let outcome = compute_step(problem, state, options)?;
    let record = IterationRecord {
        iteration: 0,
        cost: outcome.cost,
        step_norm: outcome.delta.coords().norm(),
        jacobian_evaluations: outcome.jacobian_evaluations,
    };
    Ok((outcome.delta, record))
}

fn validate_options(options: &SolveOptions) -> Result<(), SolverError> {
    if options.max_iterations == 0 {
        return Err(SolverError::InvalidOptions(
            "max_iterations must be at least 1".into(),
        ));
    }
    for (name, v) in [
        ("step_tolerance", options.step_tolerance),
        ("cost_tolerance", options.cost_tolerance),
        ("step_size", options.step_size),
        ("central_step_size", options.central_step_size),
    ] {
        if !v.is_finite() || v <= 0.0 {
            return Err(SolverError::InvalidOptions(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

/// Iterates Gauss-Newton until the step norm or the cost change drops
/// below tolerance, or `max_iterations` is reached. The returned history
/// records the cost at each linearization point; it is not forced to be
/// monotone and no line search is applied.
pub fn solve<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    options: &SolveOptions,
) -> Result<Solution, SolverError> {
    validate_options(options)?;
    let mut state = problem.initial.clone();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut previous_cost: Option<f64> = None;
    for iteration in 0..options.max_iterations {
        let outcome = compute_step(problem, &state, options)?;
        let step_norm = outcome.delta.coords().norm();
        history.push(IterationRecord {
            iteration,
            cost: outcome.cost,
            step_norm,
            jacobian_evaluations: outcome.jacobian_evaluations,
        });
        state = apply_update(&state, &outcome.delta, problem.side);
        if step_norm < options.step_tolerance {
            break;
        }
        if let Some(prev) = previous_cost {
            if (prev - outcome.cost).abs() < options.cost_tolerance {
                break;
            }
        }
        previous_cost = Some(outcome.cost);
    }
    Ok(Solution { state, history })
}

/// Diagonal blocks of the posterior covariance `(J^T W J)^-1` at `state`,
/// one block per state (used for the +/-3 sigma bounds). Runs in O(K)
/// through the block-tridiagonal factorization.
pub fn posterior_block_diagonal<R: Residuals>(
    problem: &LeastSquaresProblem<R>,
    state: &GroupElement<f64>,
    options: &SolveOptions,
) -> Result<Vec<DMatrix<f64>>, SolverError> {
    let (system, _) = assemble_sparse_normal(problem, state, options)?;
    system.diagonal_inverse_blocks()
}

/// The reference-pose residual (`ln(T^-1 T_ref)^vee`) as a one-state
/// problem, with its analytic Jacobians on both sides.
impl Residuals for cstep::problems::LogToReference {
    fn state_kinds(&self) -> Vec<GroupKind> {
        vec![self.reference().kind().clone()]
    }

    fn num_blocks(&self) -> usize {
        1
    }

    fn block_dim(&self, _block: usize) -> usize {
        self.reference().dof()
    }

    fn block_deps(&self, _block: usize) -> Vec<usize> {
        vec![0]
    }

    fn eval_block<T: CsScalar>(&self, _block: usize, deps: &[&GroupElement<T>]) -> DVector<T> {
        self.eval(deps[0])
    }

    fn analytic_jacobian_block(
        &self,
        _block: usize,
        _slot: usize,
        deps: &[&GroupElement<f64>],
        side: Side,
    ) -> Option<DMatrix<f64>> {
        let n = self.reference().dof();
        match side {
            // First-order BCH: -Ad(T_bar^-1) on the left, -1 on the right.
            Side::Left => Some(self.analytic_left_jacobian(deps[0])),
            Side::Right => Some(-DMatrix::<f64>::identity(n, n)),
        }
    }
}
