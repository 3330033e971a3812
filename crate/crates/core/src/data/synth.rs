//! Synthetic trajectory generation.
//!
//! Ground truth is built so the discrete process models hold exactly:
//! smooth attitude/velocity profiles are sampled on the state grid, the
//! position row follows the model recursion, and the inputs are recovered
//! by inverting the exact process model. Dead reckoning with the clean
//! inputs therefore reproduces the truth to rounding, and every stream is
//! reproducible from the seed.

use super::{sample_normal, Landmark, RangeBearingRecord};
use crate::estimation::{
    standard_gravity, ImuInput, MeasurementModel, OdometryInput, ProcessInput, ProcessModel,
};
use crate::groups::{so3, GroupElement};
use crate::scalar::wrap_angle;
use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::TAU;

/// Synthetic SE_2(3) dataset: truth states, noisy IMU inputs, and noisy
/// position measurements.
pub struct SyntheticImu {
    pub timestamps: Vec<f64>,
    pub truth: Vec<GroupElement<f64>>,
    /// Noise-corrupted inputs, one per interval.
    pub inputs: Vec<ProcessInput>,
    /// The exact model-inverting inputs (useful for noise-free checks).
    pub clean_inputs: Vec<ProcessInput>,
    pub position_measurements: Vec<(f64, Vector3<f64>)>,
}

fn smooth_attitude(t: f64) -> Matrix3<f64> {
    let phi = Vector3::new(
        0.25 * (TAU * 0.050 * t).sin(),
        0.20 * (TAU * 0.041 * t + 1.0).sin(),
        0.70 * (TAU * 0.033 * t).sin(),
    );
    so3::exp(&phi)
}

fn smooth_velocity(t: f64) -> Vector3<f64> {
    Vector3::new(
        0.8 * (TAU * 0.060 * t).sin(),
        0.6 * (TAU * 0.050 * t).cos(),
        0.3 * (TAU * 0.080 * t + 0.5).sin(),
    )
}

/// IMU corruption model applied on top of the exact inputs.
#[derive(Debug, Clone)]
pub struct ImuNoise {
    /// White-noise standard deviations are derived from this process
    /// covariance so the simulated errors match the estimation weights:
    /// `gyro_std = sqrt(q[0,0])/dt`, `accel_std = sqrt(q[3,3])/dt`.
    pub process: DMatrix<f64>,
    pub position_std: f64,
    pub position_hz: f64,
    /// Scale applied to the white-noise standard deviations relative to
    /// the Q-derived values. The estimation covariance is deliberately
    /// inflated with respect to the true sensor noise, the usual situation
    /// with a hand-tuned Q.
    pub white_noise_scale: f64,
    /// Constant sensor biases, not known to the estimator. Real IMU logs
    /// carry them; together with the stiff process weights they are what
    /// makes the first Gauss-Newton iteration from a dead-reckoned start
    /// trade process errors against measurement errors.
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            process: crate::estimation::imu_default_process_covariance(),
            position_std: 0.1,
            position_hz: 10.0,
            white_noise_scale: 0.05,
            gyro_bias: Vector3::new(2e-3, -1.5e-3, 2.5e-3),
            accel_bias: Vector3::new(1e-2, -1.2e-2, 8e-3),
        }
    }
}

/// Generates `states` SE_2(3) states over `duration` seconds.
pub fn generate_synthetic_imu(
    states: usize,
    duration: f64,
    seed: u64,
    noise: &ImuNoise,
) -> SyntheticImu {
    assert!(states >= 2, "need at least two states");
    assert!(duration > 0.0, "duration must be positive");
    let dt = duration / (states - 1) as f64;
    let gravity = standard_gravity();
    let timestamps: Vec<f64> = (0..states).map(|i| i as f64 * dt).collect();

    // Attitude and velocity sampled from smooth profiles; position follows
    // the model recursion r_{k+1} = r_k + dt v_k exactly.
    let mut truth = Vec::with_capacity(states);
    let mut r = Vector3::zeros();
    for (k, &t) in timestamps.iter().enumerate() {
        let c = smooth_attitude(t);
        let v = smooth_velocity(t);
        truth.push(GroupElement::se23_from_parts(&c, &v, &r));
        if k + 1 < states {
            r += v * dt;
        }
    }

    // Exact model inversion for the inputs.
    let mut clean_inputs = Vec::with_capacity(states - 1);
    for k in 0..states - 1 {
        let c_k = truth[k].rotation3();
        let c_next = truth[k + 1].rotation3();
        let omega = so3::log(&(c_k.transpose() * c_next)).expect("small rotation increments")
            / dt;
        let dv = truth[k + 1].se23_velocity() - truth[k].se23_velocity() - gravity * dt;
        let accel = c_k.transpose() * dv / dt;
        clean_inputs.push(ProcessInput::Imu(ImuInput {
            gyro: omega,
            accel,
        }));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let gyro_std = noise.white_noise_scale * noise.process[(0, 0)].sqrt() / dt;
    let accel_std = noise.white_noise_scale * noise.process[(3, 3)].sqrt() / dt;
    let inputs: Vec<ProcessInput> = clean_inputs
        .iter()
        .map(|input| {
            let ProcessInput::Imu(u) = input else {
                unreachable!()
            };
            let gyro = u.gyro
                + noise.gyro_bias
                + Vector3::new(
                    sample_normal(&mut rng, gyro_std),
                    sample_normal(&mut rng, gyro_std),
                    sample_normal(&mut rng, gyro_std),
                );
            let accel = u.accel
                + noise.accel_bias
                + Vector3::new(
                    sample_normal(&mut rng, accel_std),
                    sample_normal(&mut rng, accel_std),
                    sample_normal(&mut rng, accel_std),
                );
            ProcessInput::Imu(ImuInput { gyro, accel })
        })
        .collect();

    // Position measurements on their own rate grid, which may be denser
    // than the state grid. Between states the model moves with constant
    // velocity, so the continuous truth position is the linear interpolant
    // r(t) = r_k + (t - t_k) v_k.
    let mut meas_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut position_measurements = Vec::new();
    let mut j = 0usize;
    let mut k = 0usize;
    loop {
        let t = j as f64 / noise.position_hz;
        if t > duration + 1e-9 {
            break;
        }
        while k + 1 < states && timestamps[k + 1] <= t {
            k += 1;
        }
        let r = truth[k].se23_position() + truth[k].se23_velocity() * (t - timestamps[k]);
        let bump = Vector3::new(
            sample_normal(&mut meas_rng, noise.position_std),
            sample_normal(&mut meas_rng, noise.position_std),
            sample_normal(&mut meas_rng, noise.position_std),
        );
        position_measurements.push((t, r + bump));
        j += 1;
    }

    SyntheticImu {
        timestamps,
        truth,
        inputs,
        clean_inputs,
        position_measurements,
    }
}

/// Noise specification for the synthetic unicycle world.
#[derive(Debug, Clone)]
pub struct UnicycleNoise {
    pub speed_std: f64,
    pub angular_std: f64,
    pub range_std: f64,
    pub bearing_std: f64,
    /// Landmarks beyond this range are not observed.
    pub max_range: f64,
    pub laser_offset: f64,
}

impl Default for UnicycleNoise {
    fn default() -> Self {
        Self {
            speed_std: 0.01,
            angular_std: 0.005,
            range_std: 0.03,
            bearing_std: 0.005,
            max_range: 10.0,
            laser_offset: 0.0,
        }
    }
}

/// Synthetic SE(2) dataset: truth states, noisy odometry, a landmark map,
/// and range-bearing returns with at least one visible landmark per state.
pub struct SyntheticUnicycle {
    pub timestamps: Vec<f64>,
    pub truth: Vec<GroupElement<f64>>,
    pub inputs: Vec<ProcessInput>,
    pub clean_inputs: Vec<ProcessInput>,
    pub landmarks: Vec<Landmark>,
    pub range_bearing: Vec<RangeBearingRecord>,
}

pub fn generate_synthetic_unicycle(
    states: usize,
    rate_hz: f64,
    seed: u64,
    noise: &UnicycleNoise,
) -> SyntheticUnicycle {
    assert!(states >= 2, "need at least two states");
    assert!(rate_hz > 0.0, "rate must be positive");
    let dt = 1.0 / rate_hz;
    let timestamps: Vec<f64> = (0..states).map(|i| i as f64 * dt).collect();
    let model = ProcessModel::UnicycleSe2;

    // Smooth wandering inputs; the truth integrates them exactly.
    let clean_inputs: Vec<ProcessInput> = timestamps[..states - 1]
        .iter()
        .map(|&t| {
            ProcessInput::Odometry(OdometryInput {
                forward_speed: 0.9 + 0.25 * (0.13 * t).sin(),
                angular_rate: 0.35 * (0.09 * t + 0.7).sin() + 0.15 * (0.23 * t).sin(),
            })
        })
        .collect();
    let mut truth = Vec::with_capacity(states);
    truth.push(GroupElement::<f64>::identity(crate::groups::GroupKind::Se2));
    for (k, input) in clean_inputs.iter().enumerate() {
        let next = model.propagate(&truth[k], input, &[0.0; 2], dt);
        truth.push(next);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let inputs: Vec<ProcessInput> = clean_inputs
        .iter()
        .map(|input| {
            let ProcessInput::Odometry(u) = input else {
                unreachable!()
            };
            ProcessInput::Odometry(OdometryInput {
                forward_speed: u.forward_speed + sample_normal(&mut rng, noise.speed_std),
                angular_rate: u.angular_rate + sample_normal(&mut rng, noise.angular_std),
            })
        })
        .collect();

    // Corridor of landmarks flanking the path, spaced so every state sees
    // at least one within max_range.
    let spacing = ((rate_hz * 4.0) as usize).max(1);
    let mut landmarks = Vec::new();
    for (i, k) in (0..states).step_by(spacing).enumerate() {
        let pose = &truth[k];
        let heading = pose.se2_heading().expect("SE(2) log is total");
        let p = pose.se2_position();
        let normal = Vector2::new(-heading.sin(), heading.cos());
        for (j, side) in [-1.0, 1.0].iter().enumerate() {
            let offset = 2.5 + 1.2 * ((i as f64 * 0.7).sin().abs());
            landmarks.push(Landmark {
                id: (2 * i + j) as u64,
                position: p + normal * (side * offset),
            });
        }
    }

    // Up to four nearest landmarks per scan, at least one per state.
    let mut range_bearing = Vec::new();
    for (k, pose) in truth.iter().enumerate() {
        let mut returns: Vec<(f64, f64, u64)> = landmarks
            .iter()
            .filter_map(|lm| {
                let rb_model = MeasurementModel::RangeBearing {
                    landmark: lm.position,
                    laser_offset: noise.laser_offset,
                };
                let z = rb_model.predict(pose).expect("robot never on a landmark");
                if z[0] <= noise.max_range {
                    Some((z[0], z[1], lm.id))
                } else {
                    None
                }
            })
            .collect();
        returns.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        returns.truncate(4);
        assert!(
            !returns.is_empty(),
            "generator invariant: state {k} sees no landmark within {}",
            noise.max_range
        );
        for (range, bearing, id) in returns {
            range_bearing.push(RangeBearingRecord {
                t: timestamps[k],
                landmark_id: id,
                range: range + sample_normal(&mut rng, noise.range_std),
                bearing: wrap_angle(bearing + sample_normal(&mut rng, noise.bearing_std)),
            });
        }
    }

    SyntheticUnicycle {
        timestamps,
        truth,
        inputs,
        clean_inputs,
        landmarks,
        range_bearing,
    }
}
