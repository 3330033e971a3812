//! Run configuration: a JSON document controlling data windows, rates,
//! covariances, solver settings, and dataset paths. Unknown keys are
//! rejected at every level.

use super::DataError;
use crate::solver::{JacobianBackend, LinearSolverKind, SolveOptions};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Optional time window (seconds, in the rebased log clock).
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub rates: Rates,
    pub covariances: CovarianceOverrides,
    /// Complex-step size.
    pub h: f64,
    pub solver: SolverConfig,
    pub seed: u64,
    pub dataset: DatasetPaths,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_start: None,
            t_end: None,
            rates: Rates::default(),
            covariances: CovarianceOverrides::default(),
            h: 1e-20,
            solver: SolverConfig::default(),
            seed: 1,
            dataset: DatasetPaths::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    /// Downsample target for the input stream (IMU or odometry), Hz.
    pub input_hz: Option<f64>,
    /// Downsample target for the measurement stream, Hz.
    pub measurement_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceOverrides {
    /// Process covariance diagonal (length = state dof).
    pub q_diag: Option<Vec<f64>>,
    /// Measurement covariance diagonal.
    pub r_diag: Option<Vec<f64>>,
    /// Initial-state covariance diagonal.
    pub p0_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    ComplexStep,
    Central,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearChoice {
    Dense,
    SparseBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    pub backend: BackendChoice,
    pub linear: LinearChoice,
    pub central_step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            backend: BackendChoice::ComplexStep,
            linear: LinearChoice::SparseBlock,
            central_step_size: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetPaths {
    pub imu_csv: Option<PathBuf>,
    pub groundtruth_csv: Option<PathBuf>,
    pub odometry_csv: Option<PathBuf>,
    pub rangebearing_csv: Option<PathBuf>,
    pub landmarks_csv: Option<PathBuf>,
    /// Forward offset between the laser and the robot reference point (m);
    /// falls back to 0 when the dataset does not provide one.
    pub laser_offset: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Number of states to generate/estimate.
    pub states: usize,
    pub duration_s: f64,
    /// Position-measurement noise (m) and rate (Hz) for the SE_2(3) run.
    pub position_std: f64,
    pub position_hz: f64,
    /// Range-bearing noise for the SE(2) run.
    pub range_std: f64,
    pub bearing_std: f64,
    pub max_range: f64,
    /// Odometry input noise for the SE(2) run.
    pub speed_std: f64,
    pub angular_std: f64,
    /// Constant IMU biases applied by the SE_2(3) generator (unknown to
    /// the estimator).
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    /// True sensor white noise as a fraction of the Q-derived level.
    pub white_noise_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            states: 500,
            duration_s: 60.0,
            position_std: 0.1,
            position_hz: 10.0,
            range_std: 0.03,
            bearing_std: 0.005,
            max_range: 10.0,
            speed_std: 0.01,
            angular_std: 0.005,
            gyro_bias: [2e-3, -1.5e-3, 2.5e-3],
            accel_bias: [1e-2, -1.2e-2, 8e-3],
            white_noise_scale: 0.05,
        }
    }
}

impl RunConfig {
    pub fn to_solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iterations: self.solver.max_iterations,
            step_tolerance: self.solver.step_tolerance,
            cost_tolerance: self.solver.cost_tolerance,
            step_size: self.h,
            central_step_size: self.solver.central_step_size,
            backend: match self.solver.backend {
                BackendChoice::ComplexStep => JacobianBackend::ComplexStep,
                BackendChoice::Central => JacobianBackend::Central,
                BackendChoice::Analytic => JacobianBackend::Analytic,
            },
            linear_solver: match self.solver.linear {
                LinearChoice::Dense => LinearSolverKind::Dense,
                LinearChoice::SparseBlock => LinearSolverKind::SparseBlock,
            },
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if let (Some(a), Some(b)) = (self.t_start, self.t_end) {
            if a >= b {
                return Err(DataError::InvalidConfig(format!(
                    "t_start {a} must be below t_end {b}"
                )));
            }
        }
        for (name, rate) in [
            ("rates.input_hz", self.rates.input_hz),
            ("rates.measurement_hz", self.rates.measurement_hz),
        ] {
            if let Some(r) = rate {
                if !r.is_finite() || r <= 0.0 {
                    return Err(DataError::InvalidConfig(format!(
                        "{name} must be positive, got {r}"
                    )));
                }
            }
        }
        if self.synthetic.states < 2 {
            return Err(DataError::InvalidConfig(
                "synthetic.states must be at least 2".into(),
            ));
        }
        if !self.synthetic.duration_s.is_finite() || self.synthetic.duration_s <= 0.0 {
            return Err(DataError::InvalidConfig(
                "synthetic.duration_s must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Loads and validates a JSON run configuration; unknown keys are errors.
pub fn load_run_config(path: &Path) -> Result<RunConfig, DataError> {
    let config: RunConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    config.validate()?;
    Ok(config)
}

/// Parses a JSON run configuration from bytes (exposed for fuzzing).
pub fn parse_run_config(bytes: &[u8]) -> Result<RunConfig, DataError> {
    let config: RunConfig = serde_json::from_slice(bytes)?;
    config.validate()?;
    Ok(config)
}
