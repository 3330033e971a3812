//! MAP batch-estimation problem construction: sensor models, error
//! stacking, weight assembly, analytic Jacobian blocks for the IMU/position
//! problem, and dead-reckoning initialization.
//!
//! The error stack is ordered prior, process 1..K, measurements 0..K; every
//! block depends on at most two consecutive states, which is what makes the
//! block-tridiagonal normal equations in the solver possible.

use crate::cstep::{GroupFunction, Side};
use crate::groups::{odot, GroupElement, GroupError, GroupKind};
use crate::scalar::{complexified_atan2, wrap_angle, CsScalar};
use crate::solver::{LeastSquaresProblem, Residuals, SolverError};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum EstimationError {
    #[error("robot coincides with landmark: range zero, bearing undefined")]
    AtLandmark,
    #[error("{what} covariance (block {index}) is not symmetric positive definite")]
    NonSpdCovariance { what: &'static str, index: usize },
    #[error("timestamps must be strictly increasing (violated at index {index})")]
    NonMonotoneTimestamps { index: usize },
    #[error("expected {expected} process steps for {states} states, got {got}")]
    StepCount {
        expected: usize,
        states: usize,
        got: usize,
    },
    #[error("measurement {index} refers to state {state}, but there are {states} states")]
    MeasurementIndex {
        index: usize,
        state: usize,
        states: usize,
    },
    #[error("measurement {index} has dimension {got}, model expects {expected}")]
    MeasurementDim {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("state kind {got} does not match the process model ({expected})")]
    StateKind { expected: String, got: String },
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// IMU sample: body-frame angular rate and specific force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuInput {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Wheel-odometry sample: forward speed and angular rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryInput {
    pub forward_speed: f64,
    pub angular_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessInput {
    Imu(ImuInput),
    Odometry(OdometryInput),
}

/// Standard gravity in the datum frame.
pub fn standard_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Default process covariance for the IMU model:
/// `diag(1.6e-7 I, 2e-6 I, 1e-10 I)` over the `[phi, v, r]` blocks.
pub fn imu_default_process_covariance() -> DMatrix<f64> {
    let mut q = DMatrix::zeros(9, 9);
    for i in 0..3 {
        q[(i, i)] = 1.6e-7;
        q[(3 + i, 3 + i)] = 2e-6;
        q[(6 + i, 6 + i)] = 1e-10;
    }
    q
}

/// Discrete-time process model `X_k = F(X_{k-1}, u_{k-1}, w_{k-1})`.
#[derive(Debug, Clone)]
pub enum ProcessModel {
    /// SE_2(3) IMU kinematics: the rotation integrates the gyro, the
    /// velocity integrates gravity plus the rotated accelerometer, and the
    /// position integrates the previous velocity.
    ImuSe23 { gravity: Vector3<f64> },
    /// SE(2) nonholonomic unicycle driven by forward and angular speed.
    UnicycleSe2,
}

impl ProcessModel {
    pub fn state_kind(&self) -> GroupKind {
        match self {
            ProcessModel::ImuSe23 { .. } => GroupKind::Se23,
            ProcessModel::UnicycleSe2 => GroupKind::Se2,
        }
    }

    /// Process-noise dimension (additive on the inputs).
    pub fn noise_dim(&self) -> usize {
        match self {
            ProcessModel::ImuSe23 { .. } => 6,
            ProcessModel::UnicycleSe2 => 2,
        }
    }

    /// Propagates a state over `dt` seconds. `noise` follows the input
    /// layout (`[gyro, accel]` or `[speed, angular]`); pass zeros for the
    /// deterministic model.
    pub fn propagate<T: CsScalar>(
        &self,
        x: &GroupElement<T>,
        input: &ProcessInput,
        noise: &[f64],
        dt: f64,
    ) -> GroupElement<T> {
        match (self, input) {
            (ProcessModel::ImuSe23 { gravity }, ProcessInput::Imu(u)) => {
                assert_eq!(noise.len(), 6, "IMU noise layout is [gyro, accel]");
                let omega = u.gyro + Vector3::new(noise[0], noise[1], noise[2]);
                let accel = u.accel + Vector3::new(noise[3], noise[4], noise[5]);
                let dc = crate::groups::so3::exp(&(omega * dt)).map(T::from_real);
                let c_prev = x.rotation3();
                let v_prev = x.se23_velocity();
                let r_prev = x.se23_position();
                let c = c_prev * dc;
                let v = v_prev
                    + (gravity * dt).map(T::from_real)
                    + c_prev * (accel * dt).map(T::from_real);
                let r = r_prev + v_prev * T::from_real(dt);
                GroupElement::se23_from_parts(&c, &v, &r)
            }
            (ProcessModel::UnicycleSe2, ProcessInput::Odometry(u)) => {
                assert_eq!(noise.len(), 2, "odometry noise layout is [speed, angular]");
                let speed = u.forward_speed + noise[0];
                let angular = u.angular_rate + noise[1];
                let psi = GroupElement::<T>::se2_from_parts(
                    T::from_real(dt * angular),
                    &Vector2::new(T::from_real(dt * speed), T::zero()),
                );
                x.compose(&psi)
            }
            _ => panic!("process input variant does not match the model"),
        }
    }
}

/// Measurement model `y_k = g(X_k, nu_k)` (evaluated noise-free here).
#[derive(Debug, Clone)]
pub enum MeasurementModel {
    /// 3-D position of an SE_2(3) state: `y = [1 0 0] X p`, `p = [0 1]^T`.
    Position3d,
    /// Planar range and bearing to a known landmark; `laser_offset` is the
    /// forward distance between the sensor and the state reference point.
    RangeBearing {
        landmark: Vector2<f64>,
        laser_offset: f64,
    },
}

impl MeasurementModel {
    pub fn dim(&self) -> usize {
        match self {
            MeasurementModel::Position3d => 3,
            MeasurementModel::RangeBearing { .. } => 2,
        }
    }

    /// Noise-free prediction, complex-capable in the state.
    pub fn predict<T: CsScalar>(&self, x: &GroupElement<T>) -> Result<DVector<T>, EstimationError> {
        match self {
            MeasurementModel::Position3d => {
                let r = x.se23_position();
                Ok(DVector::from_vec(vec![r[0], r[1], r[2]]))
            }
            MeasurementModel::RangeBearing {
                landmark,
                laser_offset,
            } => {
                // Sensor point in the datum frame: D X p with p = [d 0 1]^T.
                let m = x.matrix_ref();
                let d = T::from_real(*laser_offset);
                let sx = m[(0, 0)] * d + m[(0, 2)];
                let sy = m[(1, 0)] * d + m[(1, 2)];
                let dx = T::from_real(landmark[0]) - sx;
                let dy = T::from_real(landmark[1]) - sy;
                if dx.real() == 0.0 && dy.real() == 0.0 {
                    return Err(EstimationError::AtLandmark);
                }
                let range = (dx * dx + dy * dy).cs_sqrt();
                let heading = x.se2_heading()?;
                let bearing =
                    complexified_atan2(dy, dx).map_err(|_| EstimationError::AtLandmark)? - heading;
                Ok(DVector::from_vec(vec![range, bearing]))
            }
        }
    }
}

/// Prior error `ln(X_0^-1 X_check_0)^vee`.
pub fn error_prior<T: CsScalar>(
    x0: &GroupElement<T>,
    prior_mean: &GroupElement<f64>,
) -> Result<DVector<T>, GroupError> {
    let prior: GroupElement<T> = prior_mean.cast();
    Ok(x0.inverse().compose(&prior).log()?.into_coords())
}

/// Process error `ln(X_k^-1 F(X_{k-1}, u_{k-1}, 0))^vee`.
pub fn error_process<T: CsScalar>(
    x_k: &GroupElement<T>,
    x_prev: &GroupElement<T>,
    input: &ProcessInput,
    model: &ProcessModel,
    dt: f64,
) -> Result<DVector<T>, GroupError> {
    let zeros = [0.0; 6];
    let predicted = model.propagate(x_prev, input, &zeros[..model.noise_dim()], dt);
    Ok(x_k.inverse().compose(&predicted).log()?.into_coords())
}

/// Measurement error `y_k - g(X_k, 0)`; range-bearing errors have their
/// bearing component wrapped to `(-pi, pi]` on the real part.
pub fn error_measurement<T: CsScalar>(
    x: &GroupElement<T>,
    y: &DVector<f64>,
    model: &MeasurementModel,
) -> Result<DVector<T>, EstimationError> {
    let predicted = model.predict(x)?;
    let mut e = DVector::from_fn(predicted.len(), |i, _| {
        T::from_real(y[i]) - predicted[i]
    });
    if matches!(model, MeasurementModel::RangeBearing { .. }) {
        e[1] = wrap_angle(e[1]);
    }
    Ok(e)
}

/// One process interval joining states `k-1` and `k`.
#[derive(Debug, Clone)]
pub struct ProcessStep {
    pub input: ProcessInput,
    pub covariance: DMatrix<f64>,
}

/// One measurement attached to a state.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub state_index: usize,
    pub value: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub model: MeasurementModel,
}

/// All ingredients of a batch MAP problem over K+1 states.
#[derive(Debug, Clone)]
pub struct BatchProblem {
    pub model: ProcessModel,
    /// K+1 strictly increasing timestamps.
    pub timestamps: Vec<f64>,
    /// Prior mean for the initial state.
    pub prior_mean: GroupElement<f64>,
    pub prior_covariance: DMatrix<f64>,
    /// K process steps; step `k` (0-based `k-1`) joins states `k-1` and `k`.
    pub steps: Vec<ProcessStep>,
    /// Measurements sorted by `state_index`.
    pub measurements: Vec<Measurement>,
}

impl BatchProblem {
    pub fn num_states(&self) -> usize {
        self.timestamps.len()
    }

    /// Sampling interval ending at state `k` (1-based over steps).
    pub fn dt(&self, k: usize) -> f64 {
        self.timestamps[k] - self.timestamps[k - 1]
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let states = self.num_states();
        if self.steps.len() + 1 != states {
            return Err(EstimationError::StepCount {
                expected: states.saturating_sub(1),
                states,
                got: self.steps.len(),
            });
        }
        for i in 1..states {
            if self.timestamps[i] <= self.timestamps[i - 1] {
                return Err(EstimationError::NonMonotoneTimestamps { index: i });
            }
        }
        let kind = self.model.state_kind();
        if *self.prior_mean.kind() != kind {
            return Err(EstimationError::StateKind {
                expected: kind.to_string(),
                got: self.prior_mean.kind().to_string(),
            });
        }
        check_spd(&self.prior_covariance, "prior", 0)?;
        for (i, s) in self.steps.iter().enumerate() {
            check_spd(&s.covariance, "process", i + 1)?;
        }
        for (i, m) in self.measurements.iter().enumerate() {
            if m.state_index >= states {
                return Err(EstimationError::MeasurementIndex {
                    index: i,
                    state: m.state_index,
                    states,
                });
            }
            if m.value.len() != m.model.dim() {
                return Err(EstimationError::MeasurementDim {
                    index: i,
                    expected: m.model.dim(),
                    got: m.value.len(),
                });
            }
            check_spd(&m.covariance, "measurement", i)?;
            if i > 0 && self.measurements[i - 1].state_index > m.state_index {
                return Err(EstimationError::MeasurementIndex {
                    index: i,
                    state: m.state_index,
                    states,
                });
            }
        }
        Ok(())
    }
}

fn check_spd(m: &DMatrix<f64>, what: &'static str, index: usize) -> Result<(), EstimationError> {
    let err = EstimationError::NonSpdCovariance { what, index };
    if m.nrows() != m.ncols() {
        return Err(err);
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(err);
    }
    if nalgebra::Cholesky::new(m.clone()).is_none() {
        return Err(err);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Prior,
    /// 1-based step index (joins states k-1 and k).
    Process(usize),
    /// Index into `measurements`.
    Measurement(usize),
}

#[derive(Debug, Clone)]
struct BlockSpec {
    kind: BlockKind,
    dim: usize,
    deps: Vec<usize>,
    offset: usize,
}

/// The stacked MAP error `[e_u0; e_u1 ... e_uK; e_y0 ... e_yK]` with its
/// block layout, usable both as a [`Residuals`] structure (per-block) and
/// as a [`GroupFunction`] over the composite state (whole stack).
pub struct ErrorStack<'a> {
    problem: &'a BatchProblem,
    blocks: Vec<BlockSpec>,
    total_dim: usize,
}

/// Builds the error stack in the canonical block order: prior, process
/// blocks 1..K, measurement blocks in state order.
pub fn build_error_stack(problem: &BatchProblem) -> Result<ErrorStack<'_>, EstimationError> {
    problem.validate()?;
    let n = problem.model.state_kind().dof();
    let mut blocks = Vec::with_capacity(1 + problem.steps.len() + problem.measurements.len());
    let mut offset = 0;
    blocks.push(BlockSpec {
        kind: BlockKind::Prior,
        dim: n,
        deps: vec![0],
        offset,
    });
    offset += n;
    for k in 1..problem.num_states() {
        blocks.push(BlockSpec {
            kind: BlockKind::Process(k),
            dim: n,
            deps: vec![k - 1, k],
            offset,
        });
        offset += n;
    }
    for (i, m) in problem.measurements.iter().enumerate() {
        blocks.push(BlockSpec {
            kind: BlockKind::Measurement(i),
            dim: m.model.dim(),
            deps: vec![m.state_index],
            offset,
        });
        offset += m.model.dim();
    }
    Ok(ErrorStack {
        problem,
        blocks,
        total_dim: offset,
    })
}

impl ErrorStack<'_> {
    pub fn problem(&self) -> &BatchProblem {
        self.problem
    }

    /// Row offset of each block in the stacked error.
    pub fn block_offsets(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.offset).collect()
    }

    /// Row ranges of the prior plus process blocks, then measurement rows.
    pub fn process_rows(&self) -> usize {
        self.problem.num_states() * self.problem.model.state_kind().dof()
    }

    fn eval_spec<T: CsScalar>(&self, spec: &BlockSpec, deps: &[&GroupElement<T>]) -> DVector<T> {
        let nan = |dim: usize| DVector::from_element(dim, T::from_real(f64::NAN));
        match spec.kind {
            BlockKind::Prior => error_prior(deps[0], &self.problem.prior_mean)
                .unwrap_or_else(|_| nan(spec.dim)),
            BlockKind::Process(k) => error_process(
                deps[1],
                deps[0],
                &self.problem.steps[k - 1].input,
                &self.problem.model,
                self.problem.dt(k),
            )
            .unwrap_or_else(|_| nan(spec.dim)),
            BlockKind::Measurement(i) => {
                let m = &self.problem.measurements[i];
                error_measurement(deps[0], &m.value, &m.model)
                    .unwrap_or_else(|_| nan(spec.dim))
            }
        }
    }
}

impl Residuals for ErrorStack<'_> {
    fn state_kinds(&self) -> Vec<GroupKind> {
        vec![self.problem.model.state_kind(); self.problem.num_states()]
    }

    fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn block_dim(&self, block: usize) -> usize {
        self.blocks[block].dim
    }

    fn block_deps(&self, block: usize) -> Vec<usize> {
        self.blocks[block].deps.clone()
    }

    fn eval_block<T: CsScalar>(&self, block: usize, deps: &[&GroupElement<T>]) -> DVector<T> {
        self.eval_spec(&self.blocks[block], deps)
    }

    fn analytic_jacobian_block(
        &self,
        block: usize,
        slot: usize,
        deps: &[&GroupElement<f64>],
        side: Side,
    ) -> Option<DMatrix<f64>> {
        if side != Side::Right {
            return None;
        }
        let ProcessModel::ImuSe23 { gravity } = &self.problem.model else {
            return None;
        };
        let n = 9;
        match self.blocks[block].kind {
            BlockKind::Prior => Some(-DMatrix::<f64>::identity(n, n)),
            BlockKind::Process(k) => {
                if slot == 1 {
                    Some(-DMatrix::<f64>::identity(n, n))
                } else {
                    let dt = self.problem.dt(k);
                    Some(imu_process_jacobian_prev(deps[0], deps[1], gravity, dt))
                }
            }
            BlockKind::Measurement(i) => {
                match self.problem.measurements[i].model {
                    MeasurementModel::Position3d => {
                        Some(position_measurement_jacobian(deps[0]))
                    }
                    MeasurementModel::RangeBearing { .. } => None,
                }
            }
        }
    }
}

impl GroupFunction for ErrorStack<'_> {
    fn output_dim(&self) -> usize {
        self.total_dim
    }

    fn eval<T: CsScalar>(&self, x: &GroupElement<T>) -> DVector<T> {
        let states = x.blocks();
        let mut out = DVector::from_element(self.total_dim, T::zero());
        for spec in &self.blocks {
            let deps: Vec<&GroupElement<T>> = spec.deps.iter().map(|&j| &states[j]).collect();
            let e = self.eval_spec(spec, &deps);
            out.rows_mut(spec.offset, spec.dim).copy_from(&e);
        }
        out
    }
}

/// `F_k = Ad(T_k^-1 F^op_{k-1}) B`: the right Jacobian of the process
/// error at step `k` with respect to the previous state (first-order BCH).
fn imu_process_jacobian_prev(
    x_prev: &GroupElement<f64>,
    x_k: &GroupElement<f64>,
    gravity: &Vector3<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let c = x_prev.rotation3();
    let v = x_prev.se23_velocity();
    let r = x_prev.se23_position();
    let f_op = GroupElement::se23_from_parts(&c, &(v + gravity * dt), &(r + v * dt));
    let inner = x_k.inverse().compose(&f_op);
    let mut b = DMatrix::<f64>::identity(9, 9);
    for i in 0..3 {
        b[(6 + i, 3 + i)] = dt;
    }
    inner.adjoint() * b
}

/// Right Jacobian of the position-measurement error:
/// `-[1 0 0] T_k p^odot` with `p = [0 ... 0 1]^T`.
fn position_measurement_jacobian(x: &GroupElement<f64>) -> DMatrix<f64> {
    let mut p = DVector::zeros(5);
    p[4] = 1.0;
    let od = odot(&p, &GroupKind::Se23).expect("SE_2(3) supports odot");
    let full = x.matrix() * od;
    -full.rows(0, 3).into_owned()
}

/// Dense analytic Jacobian of the stacked IMU/position error, assembled
/// from the closed-form blocks; the oracle the complex-step backend is
/// checked against.
pub fn analytic_jacobian_euroc(
    stack: &ErrorStack<'_>,
    state: &GroupElement<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    crate::solver::analytic_jacobian_dense(stack, state, Side::Right)
}

/// Block-diagonal inverse-covariance weights in the stack's block order.
pub fn build_weight(problem: &BatchProblem) -> Result<Vec<DMatrix<f64>>, EstimationError> {
    problem.validate()?;
    let mut weights = Vec::with_capacity(1 + problem.steps.len() + problem.measurements.len());
    let invert = |m: &DMatrix<f64>, what: &'static str, index: usize| {
        nalgebra::Cholesky::new(m.clone())
            .map(|c| c.inverse())
            .ok_or(EstimationError::NonSpdCovariance { what, index })
    };
    weights.push(invert(&problem.prior_covariance, "prior", 0)?);
    for (i, s) in problem.steps.iter().enumerate() {
        weights.push(invert(&s.covariance, "process", i + 1)?);
    }
    for (i, m) in problem.measurements.iter().enumerate() {
        weights.push(invert(&m.covariance, "measurement", i)?);
    }
    Ok(weights)
}

/// Integrates the deterministic process model from `x0` with the given
/// inputs; `timestamps` has one more entry than `inputs`.
pub fn dead_reckon(
    x0: &GroupElement<f64>,
    model: &ProcessModel,
    inputs: &[ProcessInput],
    timestamps: &[f64],
) -> Result<Vec<GroupElement<f64>>, EstimationError> {
    if timestamps.len() != inputs.len() + 1 {
        return Err(EstimationError::StepCount {
            expected: timestamps.len().saturating_sub(1),
            states: timestamps.len(),
            got: inputs.len(),
        });
    }
    for i in 1..timestamps.len() {
        if timestamps[i] <= timestamps[i - 1] {
            return Err(EstimationError::NonMonotoneTimestamps { index: i });
        }
    }
    let zeros = [0.0; 6];
    let mut states = Vec::with_capacity(timestamps.len());
    states.push(x0.clone());
    for (k, input) in inputs.iter().enumerate() {
        let dt = timestamps[k + 1] - timestamps[k];
        let next = model.propagate(
            states.last().expect("non-empty"),
            input,
            &zeros[..model.noise_dim()],
            dt,
        );
        states.push(next);
    }
    Ok(states)
}

/// Assembles the solver problem for a batch estimation task, starting from
/// the given states (usually the dead-reckoned chain).
pub fn build_least_squares<'a>(
    problem: &'a BatchProblem,
    initial_states: Vec<GroupElement<f64>>,
    side: Side,
) -> Result<LeastSquaresProblem<ErrorStack<'a>>, EstimationError> {
    let stack = build_error_stack(problem)?;
    let weights = build_weight(problem)?;
    let initial = GroupElement::pack(initial_states)?;
    LeastSquaresProblem::new(stack, weights, initial, side).map_err(|e| match e {
        SolverError::NonSpdWeight { block, .. } => EstimationError::NonSpdCovariance {
            what: "weight",
            index: block,
        },
        other => panic!("internal problem construction error: {other}"),
    })
}

/// Matrix3 -> rotation helper for building SE_2(3) states from loaded data.
pub fn se23_state(c: &Matrix3<f64>, v: &Vector3<f64>, r: &Vector3<f64>) -> GroupElement<f64> {
    GroupElement::se23_from_parts(c, v, r)
}
