//! CSV parsers and result writers.
//!
//! Parsers accept any `BufRead`, skip an optional header line, report
//! malformed rows with 1-based line numbers, and reject NaN/Inf fields and
//! non-monotone timestamps.

use super::{Attitude, DataError, Landmark, RangeBearingRecord, TrajectoryRecord};
use crate::estimation::{ImuInput, OdometryInput};
use crate::groups::GroupElement;
use crate::solver::IterationRecord;
use nalgebra::{DVector, Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Integer nanoseconds to double-precision seconds, splitting the integer
/// so no precision is lost to an `f64` nanosecond representation.
pub fn ns_to_seconds(ns: u64) -> f64 {
    (ns / 1_000_000_000) as f64 + (ns % 1_000_000_000) as f64 * 1e-9
}

struct Rows<R: BufRead> {
    reader: R,
    line: usize,
}

impl<R: BufRead> Rows<R> {
    fn new(reader: R) -> Self {
        Self { reader, line: 0 }
    }

    /// Next non-empty, non-comment data row split on commas. The first row
    /// is treated as a header when its first field is not numeric.
    fn next_row(&mut self) -> Result<Option<(usize, Vec<String>)>, DataError> {
        loop {
            let mut buf = String::new();
            if self.reader.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let trimmed = buf.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
            if self.line == 1 && fields[0].parse::<f64>().is_err() {
                continue; // header
            }
            return Ok(Some((self.line, fields)));
        }
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64, DataError> {
    let v: f64 = field.parse().map_err(|_| DataError::MalformedRow {
        line,
        detail: format!("'{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite { line });
    }
    Ok(v)
}

fn parse_u64(field: &str, line: usize) -> Result<u64, DataError> {
    field.parse().map_err(|_| DataError::MalformedRow {
        line,
        detail: format!("'{field}' is not an unsigned integer"),
    })
}

fn expect_fields(fields: &[String], n: usize, line: usize) -> Result<(), DataError> {
    if fields.len() != n {
        return Err(DataError::MalformedRow {
            line,
            detail: format!("expected {n} fields, got {}", fields.len()),
        });
    }
    Ok(())
}

fn check_monotone(prev: &mut Option<f64>, t: f64, line: usize) -> Result<(), DataError> {
    if let Some(p) = *prev {
        if t <= p {
            return Err(DataError::NonMonotone { line });
        }
    }
    *prev = Some(t);
    Ok(())
}

fn non_empty<T>(rows: Vec<T>, what: &str) -> Result<Vec<T>, DataError> {
    if rows.is_empty() {
        return Err(DataError::Empty { what: what.into() });
    }
    Ok(rows)
}

/// `timestamp_ns,wx,wy,wz,ax,ay,az` (rad/s, m/s^2).
pub fn parse_imu_csv<R: BufRead>(reader: R) -> Result<Vec<(f64, ImuInput)>, DataError> {
    let mut rows = Rows::new(reader);
    let mut out = Vec::new();
    let mut prev = None;
    while let Some((line, fields)) = rows.next_row()? {
        expect_fields(&fields, 7, line)?;
        let t = ns_to_seconds(parse_u64(&fields[0], line)?);
        check_monotone(&mut prev, t, line)?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| parse_f64(f, line))
            .collect::<Result<_, _>>()?;
        out.push((
            t,
            ImuInput {
                gyro: Vector3::new(v[0], v[1], v[2]),
                accel: Vector3::new(v[3], v[4], v[5]),
            },
        ));
    }
    non_empty(out, "IMU CSV")
}

pub fn load_imu_csv(path: &Path) -> Result<Vec<(f64, ImuInput)>, DataError> {
    parse_imu_csv(BufReader::new(File::open(path)?))
}

/// `timestamp_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz`.
pub fn parse_groundtruth_csv<R: BufRead>(reader: R) -> Result<Vec<TrajectoryRecord>, DataError> {
    let mut rows = Rows::new(reader);
    let mut out = Vec::new();
    let mut prev = None;
    while let Some((line, fields)) = rows.next_row()? {
        expect_fields(&fields, 11, line)?;
        let t = ns_to_seconds(parse_u64(&fields[0], line)?);
        check_monotone(&mut prev, t, line)?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| parse_f64(f, line))
            .collect::<Result<_, _>>()?;
        let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DataError::QuaternionNorm { line, norm });
        }
        out.push(TrajectoryRecord {
            t,
            position: DVector::from_vec(vec![v[0], v[1], v[2]]),
            attitude: Attitude::Quaternion {
                w: v[3],
                x: v[4],
                y: v[5],
                z: v[6],
            },
            velocity: Some(Vector3::new(v[7], v[8], v[9])),
        });
    }
    non_empty(out, "ground-truth CSV")
}

pub fn load_groundtruth_csv(path: &Path) -> Result<Vec<TrajectoryRecord>, DataError> {
    parse_groundtruth_csv(BufReader::new(File::open(path)?))
}

/// `t_s,v_mps,omega_radps`.
pub fn parse_odometry_csv<R: BufRead>(reader: R) -> Result<Vec<(f64, OdometryInput)>, DataError> {
    let mut rows = Rows::new(reader);
    let mut out = Vec::new();
    let mut prev = None;
    while let Some((line, fields)) = rows.next_row()? {
        expect_fields(&fields, 3, line)?;
        let t = parse_f64(&fields[0], line)?;
        check_monotone(&mut prev, t, line)?;
        out.push((
            t,
            OdometryInput {
                forward_speed: parse_f64(&fields[1], line)?,
                angular_rate: parse_f64(&fields[2], line)?,
            },
        ));
    }
    non_empty(out, "odometry CSV")
}

pub fn load_odometry_csv(path: &Path) -> Result<Vec<(f64, OdometryInput)>, DataError> {
    parse_odometry_csv(BufReader::new(File::open(path)?))
}

/// `t_s,landmark_id,range_m,bearing_rad`. Timestamps may repeat (several
/// landmarks per scan) but must be non-decreasing.
pub fn parse_rangebearing_csv<R: BufRead>(
    reader: R,
) -> Result<Vec<RangeBearingRecord>, DataError> {
    let mut rows = Rows::new(reader);
    let mut out: Vec<RangeBearingRecord> = Vec::new();
    while let Some((line, fields)) = rows.next_row()? {
        expect_fields(&fields, 4, line)?;
        let t = parse_f64(&fields[0], line)?;
        if let Some(last) = out.last() {
            if t < last.t {
                return Err(DataError::NonMonotone { line });
            }
        }
        out.push(RangeBearingRecord {
            t,
            landmark_id: parse_u64(&fields[1], line)?,
            range: parse_f64(&fields[2], line)?,
            bearing: parse_f64(&fields[3], line)?,
        });
    }
    non_empty(out, "range-bearing CSV")
}

pub fn load_rangebearing_csv(path: &Path) -> Result<Vec<RangeBearingRecord>, DataError> {
    parse_rangebearing_csv(BufReader::new(File::open(path)?))
}

/// `landmark_id,x_m,y_m` with unique ids.
pub fn parse_landmarks_csv<R: BufRead>(reader: R) -> Result<Vec<Landmark>, DataError> {
    let mut rows = Rows::new(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    while let Some((line, fields)) = rows.next_row()? {
        expect_fields(&fields, 3, line)?;
        let id = parse_u64(&fields[0], line)?;
        if !seen.insert(id) {
            return Err(DataError::DuplicateLandmark { line, id });
        }
        out.push(Landmark {
            id,
            position: Vector2::new(parse_f64(&fields[1], line)?, parse_f64(&fields[2], line)?),
        });
    }
    non_empty(out, "landmarks CSV")
}

pub fn load_landmarks_csv(path: &Path) -> Result<Vec<Landmark>, DataError> {
    parse_landmarks_csv(BufReader::new(File::open(path)?))
}

/// Unit quaternion (scalar first) to a rotation matrix; the input is
/// normalized first.
pub fn quaternion_to_rotation(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
    q.to_rotation_matrix().into_inner()
}

/// Rotation matrix to a unit quaternion `[w, x, y, z]`.
pub fn rotation_to_quaternion(c: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*c));
    [q.w, q.i, q.j, q.k]
}

/// `iter,cost,step_norm` with 16 significant digits.
pub fn write_convergence_csv<W: Write>(
    mut w: W,
    history: &[IterationRecord],
) -> std::io::Result<()> {
    writeln!(w, "iter,cost,step_norm")?;
    for rec in history {
        writeln!(
            w,
            "{},{:.15e},{:.15e}",
            rec.iteration, rec.cost, rec.step_norm
        )?;
    }
    Ok(())
}

/// `t,px,py,pz,vx,vy,vz,qw,qx,qy,qz` for an SE_2(3) state chain.
pub fn write_se23_trajectory_csv<W: Write>(
    mut w: W,
    timestamps: &[f64],
    states: &[GroupElement<f64>],
) -> Result<(), DataError> {
    check_lengths(timestamps.len(), states.len(), "timestamps vs states")?;
    writeln!(w, "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz")?;
    for (t, x) in timestamps.iter().zip(states) {
        let r = x.se23_position();
        let v = x.se23_velocity();
        let q = rotation_to_quaternion(&x.rotation3());
        writeln!(
            w,
            "{t:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.12},{:.12},{:.12},{:.12}",
            r[0], r[1], r[2], v[0], v[1], v[2], q[0], q[1], q[2], q[3]
        )?;
    }
    Ok(())
}

/// `t,x,y,theta` for an SE(2) state chain.
pub fn write_se2_trajectory_csv<W: Write>(
    mut w: W,
    timestamps: &[f64],
    states: &[GroupElement<f64>],
) -> Result<(), DataError> {
    check_lengths(timestamps.len(), states.len(), "timestamps vs states")?;
    writeln!(w, "t,x,y,theta")?;
    for (t, x) in timestamps.iter().zip(states) {
        let p = x.se2_position();
        let theta = x.se2_heading()?;
        writeln!(w, "{t:.9},{:.9},{:.9},{:.9}", p[0], p[1], theta)?;
    }
    Ok(())
}

/// `t,pos_err,vel_err,att_err`; the attitude error is
/// `norm(ln(C_est^T C_true)^vee)`.
pub fn write_se23_error_csv<W: Write>(
    mut w: W,
    timestamps: &[f64],
    estimates: &[GroupElement<f64>],
    truth: &[GroupElement<f64>],
) -> Result<(), DataError> {
    check_lengths(timestamps.len(), estimates.len(), "timestamps vs estimates")?;
    check_lengths(estimates.len(), truth.len(), "estimates vs truth")?;
    writeln!(w, "t,pos_err,vel_err,att_err")?;
    for ((t, est), tru) in timestamps.iter().zip(estimates).zip(truth) {
        let pos = (est.se23_position() - tru.se23_position()).norm();
        let vel = (est.se23_velocity() - tru.se23_velocity()).norm();
        let att = attitude_error(est, tru)?;
        writeln!(w, "{t:.9},{pos:.12e},{vel:.12e},{att:.12e}")?;
    }
    Ok(())
}

/// Rotation error angle between two elements carrying 3-D rotations.
pub(crate) fn attitude_error(
    est: &GroupElement<f64>,
    truth: &GroupElement<f64>,
) -> Result<f64, DataError> {
    let rel = est.rotation3().transpose() * truth.rotation3();
    let phi = crate::groups::so3::log(&rel)?;
    Ok(phi.norm())
}

/// `t,x_err,y_err,theta_err,sigma_x,sigma_y,sigma_theta`; sigmas are
/// posterior standard deviations in the right-perturbation frame
/// (tangent ordering `[theta, x, y]`).
pub fn write_se2_error_csv<W: Write>(
    mut w: W,
    timestamps: &[f64],
    estimates: &[GroupElement<f64>],
    truth: &[GroupElement<f64>],
    sigmas: &[Vector3<f64>],
) -> Result<(), DataError> {
    check_lengths(timestamps.len(), estimates.len(), "timestamps vs estimates")?;
    check_lengths(estimates.len(), truth.len(), "estimates vs truth")?;
    check_lengths(estimates.len(), sigmas.len(), "estimates vs sigmas")?;
    writeln!(w, "t,x_err,y_err,theta_err,sigma_x,sigma_y,sigma_theta")?;
    for (((t, est), tru), s) in timestamps.iter().zip(estimates).zip(truth).zip(sigmas) {
        let dp = est.se2_position() - tru.se2_position();
        let dtheta =
            crate::scalar::wrap_angle(est.se2_heading()? - tru.se2_heading()?);
        writeln!(
            w,
            "{t:.9},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            dp[0], dp[1], dtheta, s[1], s[2], s[0]
        )?;
    }
    Ok(())
}

fn check_lengths(a: usize, b: usize, what: &str) -> Result<(), DataError> {
    if a != b {
        return Err(DataError::LengthMismatch {
            what: format!("{what} ({a} vs {b})"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{GroupKind, TangentVector};
    use approx::assert_relative_eq;
    use std::io::Cursor;

    #[test]
    fn ns_conversion_is_lossless_to_f64() {
        let t = ns_to_seconds(1_403_636_579_758_555_392);
        let expected = 1_403_636_579.758_555_4; // nearest f64 to ...392 ns
        assert!((t - expected).abs() < 1e-6);
    }

    #[test]
    fn imu_two_rows() {
        let csv = "timestamp,wx,wy,wz,ax,ay,az\n\
                   1000000000,0.1,0.2,0.3,1.0,2.0,9.8\n\
                   1040000000,0.0,-0.2,0.1,0.5,0.0,9.7\n";
        let rows = parse_imu_csv(Cursor::new(csv)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_relative_eq!(rows[0].0, 1.0);
        assert_relative_eq!(rows[1].0, 1.04);
        assert_eq!(rows[0].1.gyro, Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(rows[1].1.accel, Vector3::new(0.5, 0.0, 9.7));
    }

    #[test]
    fn imu_header_only_is_empty() {
        let err = parse_imu_csv(Cursor::new("timestamp,wx,wy,wz,ax,ay,az\n")).unwrap_err();
        assert!(matches!(err, DataError::Empty { .. }));
    }

    #[test]
    fn imu_malformed_row_reports_line() {
        let csv = "1000000000,0.1,0.2,0.3,1.0,2.0,9.8\n1040000000,xyz,0,0,0,0,0\n";
        match parse_imu_csv(Cursor::new(csv)).unwrap_err() {
            DataError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn imu_rejects_non_monotone_and_nan() {
        let csv = "2000000000,0,0,0,0,0,0\n1000000000,0,0,0,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(Cursor::new(csv)).unwrap_err(),
            DataError::NonMonotone { line: 2 }
        ));
        let csv = "1000000000,0,NaN,0,0,0,0\n";
        assert!(matches!(
            parse_imu_csv(Cursor::new(csv)).unwrap_err(),
            DataError::NonFinite { line: 1 }
        ));
    }

    #[test]
    fn groundtruth_identity_pose_roundtrips() {
        let csv = "1000000000,1.0,2.0,3.0,1.0,0.0,0.0,0.0,0.1,0.2,0.3\n";
        let rows = parse_groundtruth_csv(Cursor::new(csv)).unwrap();
        assert_eq!(rows.len(), 1);
        let c = match rows[0].attitude {
            Attitude::Quaternion { w, x, y, z } => quaternion_to_rotation(w, x, y, z),
            _ => unreachable!(),
        };
        assert_relative_eq!(c, Matrix3::identity());
        assert_eq!(rows[0].velocity.unwrap(), Vector3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn groundtruth_rejects_bad_quaternion_norm() {
        let csv = "1000000000,0,0,0,0.9,0.0,0.0,0.0,0,0,0\n";
        assert!(matches!(
            parse_groundtruth_csv(Cursor::new(csv)).unwrap_err(),
            DataError::QuaternionNorm { line: 1, .. }
        ));
    }

    #[test]
    fn odometry_and_rangebearing_parse() {
        let odo = parse_odometry_csv(Cursor::new("t,v,om\n0.0,1.0,0.1\n0.2,0.9,-0.1\n")).unwrap();
        assert_eq!(odo.len(), 2);
        assert_eq!(odo[1].1.forward_speed, 0.9);
        let rb = parse_rangebearing_csv(Cursor::new("0.0,3,2.5,0.7\n0.0,4,1.5,-0.2\n")).unwrap();
        assert_eq!(rb.len(), 2);
        assert_eq!(rb[0].landmark_id, 3);
    }

    #[test]
    fn landmarks_unique_ids() {
        let lm = parse_landmarks_csv(Cursor::new("1,0.0,1.0\n2,3.0,4.0\n")).unwrap();
        assert_eq!(lm.len(), 2);
        assert!(matches!(
            parse_landmarks_csv(Cursor::new("1,0.0,1.0\n1,3.0,4.0\n")).unwrap_err(),
            DataError::DuplicateLandmark { line: 2, id: 1 }
        ));
    }

    #[test]
    fn quaternion_rotation_roundtrip() {
        let phi = Vector3::new(0.3, -0.5, 0.8);
        let c = crate::groups::so3::exp(&phi);
        let q = rotation_to_quaternion(&c);
        let back = quaternion_to_rotation(q[0], q[1], q[2], q[3]);
        assert_relative_eq!(c, back, epsilon = 1e-12);
    }

    #[test]
    fn error_csv_zero_for_identical_trajectories() {
        let xi = TangentVector::from_coords(
            GroupKind::Se23,
            nalgebra::DVector::from_vec(vec![0.1, 0.0, 0.2, 1.0, 0.0, 0.0, 2.0, 1.0, 0.5]),
        )
        .unwrap();
        let x = xi.exp();
        let mut buf = Vec::new();
        write_se23_error_csv(&mut buf, &[0.0], std::slice::from_ref(&x), &[x.clone()]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,pos_err,vel_err,att_err");
        let row = lines.next().unwrap();
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(&fields[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn attitude_error_of_quarter_turn_is_pi_over_2() {
        let a = GroupElement::<f64>::identity(GroupKind::Se23);
        let phi = Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let b = GroupElement::se23_from_parts(
            &crate::groups::so3::exp(&phi),
            &Vector3::zeros(),
            &Vector3::zeros(),
        );
        let err = attitude_error(&a, &b).unwrap();
        assert_relative_eq!(err, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn convergence_csv_format() {
        let history = vec![IterationRecord {
            iteration: 0,
            cost: 1.5,
            step_norm: 0.25,
            jacobian_evaluations: 12,
        }];
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &history).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iter,cost,step_norm\n"));
        assert!(s.contains("0,1.500000000000000e0,2.500000000000000e-1"));
    }
}
