//! Builders turning sensor streams into batch problems.
//!
//! States sit on the input-stream timestamps (one process step per
//! interval); measurements are attached to the nearest state when within
//! half the local sampling period, and dropped otherwise. Timestamps are
//! rebased to the input stream's start so the solver works with small
//! numbers rather than epoch seconds.

use super::{DataError, Landmark, RangeBearingRecord};
use crate::estimation::{
    BatchProblem, ImuInput, Measurement, MeasurementModel, OdometryInput, ProcessInput,
    ProcessModel, ProcessStep,
};
use crate::groups::GroupElement;
use nalgebra::{DMatrix, DVector, Vector3};
use std::collections::HashMap;

fn nearest_state(timestamps: &[f64], t: f64) -> usize {
    match timestamps.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => i,
        Err(i) => {
            if i == 0 {
                0
            } else if i >= timestamps.len() {
                timestamps.len() - 1
            } else if (t - timestamps[i - 1]) <= (timestamps[i] - t) {
                i - 1
            } else {
                i
            }
        }
    }
}

fn median_period(timestamps: &[f64]) -> f64 {
    let mut gaps: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// SE_2(3) batch problem from IMU inputs and position measurements.
pub fn build_imu_batch_problem(
    imu: &[(f64, ImuInput)],
    positions: &[(f64, Vector3<f64>)],
    prior_mean: GroupElement<f64>,
    p0: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
) -> Result<BatchProblem, DataError> {
    if imu.len() < 2 {
        return Err(DataError::Empty {
            what: "IMU stream (need at least two samples)".into(),
        });
    }
    let t0 = imu[0].0;
    let timestamps: Vec<f64> = imu.iter().map(|(t, _)| t - t0).collect();
    let steps: Vec<ProcessStep> = imu[..imu.len() - 1]
        .iter()
        .map(|(_, u)| ProcessStep {
            input: ProcessInput::Imu(*u),
            covariance: q.clone(),
        })
        .collect();
    let half_period = 0.5 * median_period(&timestamps);
    let mut measurements = Vec::new();
    for (t, y) in positions {
        let t_rel = t - t0;
        let k = nearest_state(&timestamps, t_rel);
        if (timestamps[k] - t_rel).abs() > half_period {
            continue;
        }
        measurements.push(Measurement {
            state_index: k,
            value: DVector::from_column_slice(y.as_slice()),
            covariance: r.clone(),
            model: MeasurementModel::Position3d,
        });
    }
    measurements.sort_by_key(|m| m.state_index);
    let problem = BatchProblem {
        model: ProcessModel::ImuSe23 {
            gravity: crate::estimation::standard_gravity(),
        },
        timestamps,
        prior_mean,
        prior_covariance: p0,
        steps,
        measurements,
    };
    problem.validate()?;
    Ok(problem)
}

/// SE(2) batch problem from wheel odometry, range-bearing returns, and a
/// landmark map. Unknown landmark ids are an error.
#[allow(clippy::too_many_arguments)]
pub fn build_unicycle_batch_problem(
    odometry: &[(f64, OdometryInput)],
    range_bearing: &[RangeBearingRecord],
    landmarks: &[Landmark],
    laser_offset: f64,
    prior_mean: GroupElement<f64>,
    p0: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
) -> Result<BatchProblem, DataError> {
    if odometry.len() < 2 {
        return Err(DataError::Empty {
            what: "odometry stream (need at least two samples)".into(),
        });
    }
    let map: HashMap<u64, &Landmark> = landmarks.iter().map(|l| (l.id, l)).collect();
    let t0 = odometry[0].0;
    let timestamps: Vec<f64> = odometry.iter().map(|(t, _)| t - t0).collect();
    let steps: Vec<ProcessStep> = odometry[..odometry.len() - 1]
        .iter()
        .map(|(_, u)| ProcessStep {
            input: ProcessInput::Odometry(*u),
            covariance: q.clone(),
        })
        .collect();
    let half_period = 0.5 * median_period(&timestamps);
    let mut measurements = Vec::new();
    for rb in range_bearing {
        let lm = map
            .get(&rb.landmark_id)
            .ok_or(DataError::UnknownLandmark { id: rb.landmark_id })?;
        let t_rel = rb.t - t0;
        let k = nearest_state(&timestamps, t_rel);
        if (timestamps[k] - t_rel).abs() > half_period {
            continue;
        }
        measurements.push(Measurement {
            state_index: k,
            value: DVector::from_vec(vec![rb.range, rb.bearing]),
            covariance: r.clone(),
            model: MeasurementModel::RangeBearing {
                landmark: lm.position,
                laser_offset,
            },
        });
    }
    measurements.sort_by_key(|m| m.state_index);
    let problem = BatchProblem {
        model: ProcessModel::UnicycleSe2,
        timestamps,
        prior_mean,
        prior_covariance: p0,
        steps,
        measurements,
    };
    problem.validate()?;
    Ok(problem)
}

/// Default SE(2) process covariance from per-step odometry noise:
/// `diag((dt sigma_ang)^2, (dt sigma_vel)^2, lateral_floor)` over the
/// `[theta, forward, lateral]` error components. The lateral floor keeps
/// the covariance positive definite for the nonholonomic model.
pub fn unicycle_process_covariance(
    dt: f64,
    speed_std: f64,
    angular_std: f64,
    lateral_floor: f64,
) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(3, 3);
    q[(0, 0)] = (dt * angular_std).powi(2).max(1e-12);
    q[(1, 1)] = (dt * speed_std).powi(2).max(1e-12);
    q[(2, 2)] = lateral_floor;
    q
}
