//! Dataset ingestion (CSV), downsampling, measurement simulation,
//! synthetic trajectory generation, and result writers.
//!
//! All file formats are plain UTF-8 CSV with headers; timestamps in the
//! EuRoC-style files are integer nanoseconds and are converted to
//! double-precision seconds on load (never stored as f64 nanoseconds,
//! which would lose integer precision).

mod config;
mod io;
mod pipeline;
mod synth;

pub use config::{
    load_run_config, parse_run_config, BackendChoice, CovarianceOverrides, DatasetPaths,
    LinearChoice, Rates, RunConfig, SolverConfig, SyntheticConfig,
};
pub use io::{
    load_groundtruth_csv, load_imu_csv, load_landmarks_csv, load_odometry_csv,
    load_rangebearing_csv, ns_to_seconds, parse_groundtruth_csv, parse_imu_csv,
    parse_landmarks_csv, parse_odometry_csv, parse_rangebearing_csv, quaternion_to_rotation,
    rotation_to_quaternion, write_convergence_csv, write_se23_error_csv,
    write_se23_trajectory_csv, write_se2_error_csv, write_se2_trajectory_csv,
};
pub use pipeline::{
    build_imu_batch_problem, build_unicycle_batch_problem, unicycle_process_covariance,
};
pub use synth::{
    generate_synthetic_imu, generate_synthetic_unicycle, ImuNoise, SyntheticImu,
    SyntheticUnicycle, UnicycleNoise,
};

use crate::estimation::EstimationError;
use crate::groups::GroupError;
use nalgebra::{DVector, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Gaussian-sampling generator used everywhere randomness is needed;
/// recorded in run metadata for reproducibility.
pub const RNG_ALGORITHM: &str = "chacha12";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{what} contains no data rows")]
    Empty { what: String },
    #[error("line {line}: malformed row: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("line {line}: non-finite field")]
    NonFinite { line: usize },
    #[error("line {line}: timestamps are not strictly increasing")]
    NonMonotone { line: usize },
    #[error("line {line}: quaternion norm {norm} deviates from 1 by more than 1e-6")]
    QuaternionNorm { line: usize, norm: f64 },
    #[error("line {line}: duplicate landmark id {id}")]
    DuplicateLandmark { line: usize, id: u64 },
    #[error("unknown landmark id {id} referenced by a range-bearing measurement")]
    UnknownLandmark { id: u64 },
    #[error("downsample target {target} Hz exceeds the native rate {native:.3} Hz")]
    RateTooHigh { target: f64, native: f64 },
    #[error("length mismatch: {what}")]
    LengthMismatch { what: String },
    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Time-stamped pose record as stored in ground-truth logs.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Seconds.
    pub t: f64,
    /// 2-D or 3-D position in meters.
    pub position: DVector<f64>,
    pub attitude: Attitude,
    /// Velocity in m/s, when the log provides it.
    pub velocity: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Attitude {
    /// Planar heading in radians.
    Heading(f64),
    /// Unit quaternion, scalar first.
    Quaternion { w: f64, x: f64, y: f64, z: f64 },
}

/// Known landmark position in the datum frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector2<f64>,
}

/// One range-bearing return: `t_s,landmark_id,range_m,bearing_rad`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBearingRecord {
    pub t: f64,
    pub landmark_id: u64,
    pub range: f64,
    pub bearing: f64,
}

/// Keeps the samples nearest to a uniform grid at `target_hz`;
/// deterministic, idempotent at the native rate.
pub fn downsample<T: Clone>(stream: &[(f64, T)], target_hz: f64) -> Result<Vec<(f64, T)>, DataError> {
    if stream.len() < 2 {
        return Ok(stream.to_vec());
    }
    let t0 = stream[0].0;
    let t_last = stream[stream.len() - 1].0;
    let native = (stream.len() - 1) as f64 / (t_last - t0);
    if target_hz > native * (1.0 + 1e-9) {
        return Err(DataError::RateTooHigh {
            target: target_hz,
            native,
        });
    }
    let period = 1.0 / target_hz;
    let mut out: Vec<(f64, T)> = Vec::new();
    let mut last_taken: Option<usize> = None;
    let mut cursor = 0usize;
    let mut k = 0usize;
    loop {
        let grid = t0 + k as f64 * period;
        if grid > t_last + 1e-9 * period {
            break;
        }
        while cursor + 1 < stream.len()
            && (stream[cursor + 1].0 - grid).abs() <= (stream[cursor].0 - grid).abs()
        {
            cursor += 1;
        }
        if last_taken != Some(cursor) {
            out.push(stream[cursor].clone());
            last_taken = Some(cursor);
        }
        k += 1;
    }
    Ok(out)
}

/// Samples positions from ground truth at `rate_hz` and adds iid
/// `N(0, sigma^2)` noise per axis from a seeded generator.
pub fn simulate_position_measurements(
    truth: &[(f64, Vector3<f64>)],
    sigma: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<(f64, Vector3<f64>)>, DataError> {
    let sampled = downsample(truth, rate_hz)?;
    if sigma == 0.0 {
        return Ok(sampled);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma checked nonzero and finite");
    Ok(sampled
        .into_iter()
        .map(|(t, p)| {
            let noise = Vector3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
            (t, p + noise)
        })
        .collect())
}

pub(crate) fn sample_normal(rng: &mut ChaCha12Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        rng.sample(Normal::new(0.0, std).expect("finite std"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_stream(n: usize, hz: f64) -> Vec<(f64, usize)> {
        (0..n).map(|i| (i as f64 / hz, i)).collect()
    }

    #[test]
    fn downsample_keeps_every_eighth() {
        let stream = uniform_stream(200, 200.0);
        let out = downsample(&stream, 25.0).unwrap();
        for (i, (_, idx)) in out.iter().enumerate() {
            assert_eq!(*idx, i * 8);
        }
        assert_eq!(out.len(), 25);
    }

    #[test]
    fn downsample_halves_ten_hz() {
        let stream = uniform_stream(100, 10.0);
        let out = downsample(&stream, 5.0).unwrap();
        for (i, (_, idx)) in out.iter().enumerate() {
            assert_eq!(*idx, i * 2);
        }
    }

    #[test]
    fn downsample_native_rate_is_identity() {
        let stream = uniform_stream(50, 10.0);
        let out = downsample(&stream, 10.0).unwrap();
        assert_eq!(out.len(), stream.len());
        for (a, b) in out.iter().zip(&stream) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn downsample_is_idempotent() {
        let stream = uniform_stream(120, 40.0);
        let once = downsample(&stream, 8.0).unwrap();
        let twice = downsample(&once, 8.0).unwrap();
        assert_eq!(once.len(), twice.len());
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn downsample_rejects_upsampling() {
        let stream = uniform_stream(10, 5.0);
        assert!(matches!(
            downsample(&stream, 50.0),
            Err(DataError::RateTooHigh { .. })
        ));
    }

    #[test]
    fn simulate_measurements_zero_sigma_is_exact() {
        let truth: Vec<(f64, Vector3<f64>)> = (0..50)
            .map(|i| (i as f64 * 0.1, Vector3::new(i as f64, 0.0, 1.0)))
            .collect();
        let out = simulate_position_measurements(&truth, 0.0, 5.0, 7).unwrap();
        assert_eq!(out[1].1, Vector3::new(2.0, 0.0, 1.0));
    }

    #[test]
    fn simulate_measurements_seeded_reproducible() {
        let truth: Vec<(f64, Vector3<f64>)> = (0..100)
            .map(|i| (i as f64 * 0.04, Vector3::new(0.0, i as f64 * 0.01, 2.0)))
            .collect();
        let a = simulate_position_measurements(&truth, 0.1, 10.0, 42).unwrap();
        let b = simulate_position_measurements(&truth, 0.1, 10.0, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.1, y.1);
        }
        // Noise actually applied.
        assert_ne!(a[0].1, truth[0].1);
    }
}
