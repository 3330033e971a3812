//! Command-line runner: step-size sweeps, the two-backend reference-pose
//! optimization, the SE_2(3) and SE(2) batch experiments, and the library
//! selftest.
//!
//! Exit codes: 0 success, 1 validation failure (bad config, bad data),
//! 2 numerical failure (solver breakdown, accuracy floor violated).

use clap::{Parser, Subcommand, ValueEnum};
use lie_cstep::cstep::{self, problems, DiffMethod, ReferenceKind, Side};
use lie_cstep::data::{self, RunConfig, UnicycleNoise};
use lie_cstep::estimation::{
    self, dead_reckon, imu_default_process_covariance, ProcessInput,
};
use lie_cstep::groups::{GroupElement, GroupKind, TangentVector};
use lie_cstep::selftest;
use lie_cstep::solver::{self, JacobianBackend, SolveOptions, Solution};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lie-cstep",
    version,
    about = "Complex-step Jacobians on matrix Lie groups and batch pose estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    ComplexStep,
    Central,
    Analytic,
}

impl From<BackendArg> for JacobianBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::ComplexStep => JacobianBackend::ComplexStep,
            BackendArg::Central => JacobianBackend::Central,
            BackendArg::Analytic => JacobianBackend::Analytic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Step-size sweep of complex-step vs central-difference accuracy on
    /// the bilinear SE(3) test function.
    Sweep {
        /// Smallest step size (inclusive).
        #[arg(long, default_value_t = 1e-20)]
        h_min: f64,
        /// Largest step size (inclusive).
        #[arg(long, default_value_t = 1e-1)]
        h_max: f64,
        /// Output CSV path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Gauss-Newton on the reference-pose problem with complex-step and
    /// analytic Jacobians; writes both convergence histories.
    Example2 {
        #[arg(long, default_value_t = 3)]
        seed: u64,
        /// Output directory for the two CSV files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// SE_2(3) batch estimation from IMU inputs and position measurements.
    BatchSe23 {
        /// JSON run configuration (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the synthetic generator instead of dataset files.
        #[arg(long)]
        synthetic: bool,
        /// Jacobian backend override.
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// SE(2) batch estimation from wheel odometry and range-bearing
    /// measurements to known landmarks.
    BatchSe2 {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the seeded invariant suites of every module.
    Selftest,
}

enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<solver::SolverError> for CliError {
    fn from(e: solver::SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<estimation::EstimationError> for CliError {
    fn from(e: estimation::EstimationError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<lie_cstep::groups::GroupError> for CliError {
    fn from(e: lie_cstep::groups::GroupError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o error: {e}"))
    }
}

impl From<cstep::CstepError> for CliError {
    fn from(e: cstep::CstepError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep {
            h_min,
            h_max,
            out,
            seed,
        } => cmd_sweep(h_min, h_max, &out, seed),
        Command::Example2 { seed, out } => cmd_example2(seed, &out),
        Command::BatchSe23 {
            config,
            synthetic,
            backend,
            out_dir,
        } => cmd_batch_se23(config.as_deref(), synthetic, backend, &out_dir),
        Command::BatchSe2 {
            config,
            synthetic,
            backend,
            out_dir,
        } => cmd_batch_se2(config.as_deref(), synthetic, backend, &out_dir),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn random_se3(rng: &mut ChaCha12Rng, scale: f64) -> GroupElement<f64> {
    let coords = DVector::from_fn(6, |_, _| rng.random_range(-scale..scale));
    TangentVector::from_coords(GroupKind::Se3, coords)
        .expect("fixed dof")
        .exp()
}

fn cmd_sweep(h_min: f64, h_max: f64, out: &Path, seed: u64) -> Result<(), CliError> {
    if !h_min.is_finite() || h_min <= 0.0 || !(h_max >= h_min) {
        return Err(CliError::Validation(format!(
            "invalid step range [{h_min}, {h_max}]"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let v = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
    let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
    let t_bar = random_se3(&mut rng, 1.0);
    let f = problems::BilinearForm::new(v, y);
    let reference = f.analytic_left_jacobian(&t_bar);
    let mut steps = Vec::new();
    let mut h = h_max;
    while h >= h_min * (1.0 - 1e-12) {
        steps.push(h);
        h /= 10.0;
    }
    let report = cstep::step_sweep(
        &f,
        &t_bar,
        Side::Left,
        &reference,
        ReferenceKind::Analytic,
        &steps,
    )?;
    report.write_csv(BufWriter::new(File::create(out)?))?;
    let cs_floor = report
        .min_error(DiffMethod::ComplexStep)
        .expect("non-empty sweep");
    let cd_floor = report
        .min_error(DiffMethod::CentralDifference)
        .expect("non-empty sweep");
    println!(
        "sweep: {} step sizes, complex-step floor {cs_floor:.3e}, central-difference floor {cd_floor:.3e}",
        steps.len()
    );
    println!("wrote {}", out.display());
    if cs_floor > 1e-13 {
        return Err(CliError::Numerical(format!(
            "complex-step error floor {cs_floor:.3e} exceeds 1e-13"
        )));
    }
    Ok(())
}

fn cmd_example2(seed: u64, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let t_bar = random_se3(&mut rng, 0.7);
    let t_ref = random_se3(&mut rng, 0.7);
    let weight = DMatrix::<f64>::identity(6, 6);
    let mut summaries = Vec::new();
    for (backend, name) in [
        (JacobianBackend::ComplexStep, "complex_step"),
        (JacobianBackend::Analytic, "analytic"),
    ] {
        let problem = solver::LeastSquaresProblem::new(
            problems::LogToReference::new(t_ref.clone()),
            vec![weight.clone()],
            t_bar.clone(),
            Side::Left,
        )?;
        let options = SolveOptions {
            backend,
            ..Default::default()
        };
        let solution = solver::solve(&problem, &options)?;
        let final_cost = solver::cost(&problem, &solution.state)?;
        let path = out.join(format!("example2_{name}.csv"));
        data::write_convergence_csv(BufWriter::new(File::create(&path)?), &solution.history)?;
        println!(
            "{name}: {} iterations, final cost {final_cost:.3e}, wrote {}",
            solution.history.len(),
            path.display()
        );
        summaries.push((name, solution.history.clone(), final_cost));
    }
    Ok(())
}

fn load_or_default_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(data::load_run_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn diag_or(default: DMatrix<f64>, diag: &Option<Vec<f64>>) -> Result<DMatrix<f64>, CliError> {
    match diag {
        None => Ok(default),
        Some(d) => {
            if d.len() != default.nrows() {
                return Err(CliError::Validation(format!(
                    "covariance diagonal has {} entries, expected {}",
                    d.len(),
                    default.nrows()
                )));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
        }
    }
}

fn report_solution(name: &str, solution: &Solution) {
    let evals: usize = solution
        .history
        .iter()
        .map(|r| r.jacobian_evaluations)
        .sum();
    let first = &solution.history[0];
    let last = &solution.history[solution.history.len() - 1];
    println!(
        "{name}: {} iterations, cost {:.6e} -> {:.6e}, total Jacobian evaluations {evals}",
        solution.history.len(),
        first.cost,
        last.cost
    );
}

fn cmd_batch_se23(
    config: Option<&Path>,
    synthetic: bool,
    backend: Option<BackendArg>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_or_default_config(config)?;
    std::fs::create_dir_all(out_dir)?;
    let q = diag_or(imu_default_process_covariance(), &cfg.covariances.q_diag)?;
    let r = diag_or(
        DMatrix::identity(3, 3) * cfg.synthetic.position_std.powi(2).max(1e-12),
        &cfg.covariances.r_diag,
    )?;
    let p0 = diag_or(DMatrix::identity(9, 9) * 1e-10, &cfg.covariances.p0_diag)?;

    let use_synthetic = synthetic || cfg.dataset.imu_csv.is_none();
    let (problem, truth) = if use_synthetic {
        let synth = data::generate_synthetic_imu(
            cfg.synthetic.states,
            cfg.synthetic.duration_s,
            cfg.seed,
            &data::ImuNoise {
                process: q.clone(),
                position_std: cfg.synthetic.position_std,
                position_hz: cfg.synthetic.position_hz,
                white_noise_scale: cfg.synthetic.white_noise_scale,
                gyro_bias: Vector3::from(cfg.synthetic.gyro_bias),
                accel_bias: Vector3::from(cfg.synthetic.accel_bias),
            },
        );
        let imu: Vec<(f64, estimation::ImuInput)> = synth
            .timestamps
            .iter()
            .zip(&synth.inputs)
            .map(|(&t, input)| {
                let ProcessInput::Imu(u) = input else {
                    unreachable!()
                };
                (t, *u)
            })
            .chain(std::iter::once((
                *synth.timestamps.last().expect("non-empty"),
                estimation::ImuInput {
                    gyro: Vector3::zeros(),
                    accel: Vector3::zeros(),
                },
            )))
            .collect();
        let problem = data::build_imu_batch_problem(
            &imu,
            &synth.position_measurements,
            synth.truth[0].clone(),
            p0,
            q.clone(),
            r.clone(),
        )?;
        (problem, Some(synth.truth))
    } else {
        let imu_path = cfg.dataset.imu_csv.as_ref().expect("checked above");
        let gt_path = cfg.dataset.groundtruth_csv.as_ref().ok_or_else(|| {
            CliError::Validation("dataset.groundtruth_csv is required for batch-se23".into())
        })?;
        let mut imu = data::load_imu_csv(imu_path)?;
        let gt = data::load_groundtruth_csv(gt_path)?;
        let log_start = imu[0].0;
        if let (Some(a), Some(b)) = (cfg.t_start, cfg.t_end) {
            imu.retain(|(t, _)| (*t - log_start) >= a && (*t - log_start) <= b);
        }
        if let Some(hz) = cfg.rates.input_hz {
            imu = data::downsample(&imu, hz)?;
        }
        if imu.len() < 2 {
            return Err(CliError::Validation(
                "IMU window leaves fewer than two samples".into(),
            ));
        }
        // Ground-truth positions drive simulated position measurements.
        let truth_positions: Vec<(f64, Vector3<f64>)> = gt
            .iter()
            .filter(|rec| {
                let t = rec.t - log_start;
                cfg.t_start.is_none_or(|a| t >= a) && cfg.t_end.is_none_or(|b| t <= b)
            })
            .map(|rec| {
                (
                    rec.t,
                    Vector3::new(rec.position[0], rec.position[1], rec.position[2]),
                )
            })
            .collect();
        let sigma = r[(0, 0)].sqrt();
        let measurements = data::simulate_position_measurements(
            &truth_positions,
            sigma,
            cfg.rates.measurement_hz.unwrap_or(cfg.synthetic.position_hz),
            cfg.seed,
        )?;
        // Prior mean from the first ground-truth record in the window.
        let first = gt
            .iter()
            .find(|rec| (rec.t - imu[0].0).abs() <= 0.5)
            .ok_or_else(|| {
                CliError::Validation("no ground-truth record near the window start".into())
            })?;
        let data::Attitude::Quaternion { w, x, y, z } = first.attitude else {
            return Err(CliError::Validation(
                "SE_2(3) ground truth must carry quaternions".into(),
            ));
        };
        let c = data::quaternion_to_rotation(w, x, y, z);
        let vel = first.velocity.unwrap_or_else(Vector3::zeros);
        let pos = Vector3::new(first.position[0], first.position[1], first.position[2]);
        let prior = GroupElement::se23_from_parts(&c, &vel, &pos);
        let problem =
            data::build_imu_batch_problem(&imu, &measurements, prior, p0, q.clone(), r.clone())?;
        (problem, None)
    };

    let inputs: Vec<ProcessInput> = problem.steps.iter().map(|s| s.input).collect();
    let initial = dead_reckon(
        &problem.prior_mean,
        &problem.model,
        &inputs,
        &problem.timestamps,
    )?;
    let ls = estimation::build_least_squares(&problem, initial, Side::Right)?;
    let mut options = cfg.to_solve_options();
    if let Some(b) = backend {
        options.backend = b.into();
    }
    let solution = solver::solve(&ls, &options)?;
    report_solution("batch-se23", &solution);

    let states = solution.state.clone().unpack()?;
    data::write_se23_trajectory_csv(
        BufWriter::new(File::create(out_dir.join("trajectory_se23.csv"))?),
        &problem.timestamps,
        &states,
    )?;
    data::write_convergence_csv(
        BufWriter::new(File::create(out_dir.join("convergence_se23.csv"))?),
        &solution.history,
    )?;
    if let Some(truth) = truth {
        data::write_se23_error_csv(
            BufWriter::new(File::create(out_dir.join("errors_se23.csv"))?),
            &problem.timestamps,
            &states,
            &truth,
        )?;
        let rmse = (states
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a.se23_position() - b.se23_position()).norm_squared())
            .sum::<f64>()
            / states.len() as f64)
            .sqrt();
        println!("position RMSE vs truth: {rmse:.4} m");
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_batch_se2(
    config: Option<&Path>,
    synthetic: bool,
    backend: Option<BackendArg>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_or_default_config(config)?;
    std::fs::create_dir_all(out_dir)?;
    let laser_offset = cfg.dataset.laser_offset.unwrap_or(0.0);
    let p0 = diag_or(DMatrix::identity(3, 3), &cfg.covariances.p0_diag)?;
    let r = diag_or(
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            cfg.synthetic.range_std.powi(2).max(1e-12),
            cfg.synthetic.bearing_std.powi(2).max(1e-12),
        ])),
        &cfg.covariances.r_diag,
    )?;

    let use_synthetic = synthetic || cfg.dataset.odometry_csv.is_none();
    let (problem, truth) = if use_synthetic {
        let states = if cfg.synthetic.states == RunConfig::default().synthetic.states
            && config.is_none()
        {
            600
        } else {
            cfg.synthetic.states
        };
        let rate = 5.0;
        let noise = UnicycleNoise {
            speed_std: cfg.synthetic.speed_std,
            angular_std: cfg.synthetic.angular_std,
            range_std: cfg.synthetic.range_std,
            bearing_std: cfg.synthetic.bearing_std,
            max_range: cfg.synthetic.max_range,
            laser_offset,
        };
        let synth = data::generate_synthetic_unicycle(states, rate, cfg.seed, &noise);
        let odometry: Vec<(f64, estimation::OdometryInput)> = synth
            .timestamps
            .iter()
            .zip(
                synth
                    .inputs
                    .iter()
                    .chain(std::iter::once(&ProcessInput::Odometry(
                        estimation::OdometryInput {
                            forward_speed: 0.0,
                            angular_rate: 0.0,
                        },
                    ))),
            )
            .map(|(&t, input)| {
                let ProcessInput::Odometry(u) = input else {
                    unreachable!()
                };
                (t, *u)
            })
            .collect();
        let q = diag_or(
            data::unicycle_process_covariance(
                1.0 / rate,
                noise.speed_std,
                noise.angular_std,
                1e-8,
            ),
            &cfg.covariances.q_diag,
        )?;
        // Initial guess: ground truth perturbed by a draw from N(0, P0).
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x51ed);
        let l = nalgebra::Cholesky::new(p0.clone())
            .ok_or_else(|| CliError::Validation("P0 must be positive definite".into()))?
            .l();
        let z = DVector::from_fn(3, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let prior = solver::apply_update(
            &synth.truth[0],
            &TangentVector::from_coords(GroupKind::Se2, l * z).expect("dof 3"),
            Side::Right,
        );
        let problem = data::build_unicycle_batch_problem(
            &odometry,
            &synth.range_bearing,
            &synth.landmarks,
            laser_offset,
            prior,
            p0,
            q,
            r.clone(),
        )?;
        (problem, Some(synth.truth))
    } else {
        let odo_path = cfg.dataset.odometry_csv.as_ref().expect("checked above");
        let rb_path = cfg.dataset.rangebearing_csv.as_ref().ok_or_else(|| {
            CliError::Validation("dataset.rangebearing_csv is required for batch-se2".into())
        })?;
        let lm_path = cfg.dataset.landmarks_csv.as_ref().ok_or_else(|| {
            CliError::Validation("dataset.landmarks_csv is required for batch-se2".into())
        })?;
        let mut odometry = data::load_odometry_csv(odo_path)?;
        let mut rb = data::load_rangebearing_csv(rb_path)?;
        let landmarks = data::load_landmarks_csv(lm_path)?;
        let log_start = odometry[0].0;
        if let (Some(a), Some(b)) = (cfg.t_start, cfg.t_end) {
            odometry.retain(|(t, _)| (*t - log_start) >= a && (*t - log_start) <= b);
            rb.retain(|m| (m.t - log_start) >= a && (m.t - log_start) <= b);
        }
        if let Some(hz) = cfg.rates.input_hz {
            odometry = data::downsample(&odometry, hz)?;
        }
        if odometry.len() < 2 {
            return Err(CliError::Validation(
                "odometry window leaves fewer than two samples".into(),
            ));
        }
        let dt = (odometry[odometry.len() - 1].0 - odometry[0].0) / (odometry.len() - 1) as f64;
        let q = diag_or(
            data::unicycle_process_covariance(dt, 0.05, 0.02, 1e-8),
            &cfg.covariances.q_diag,
        )?;
        let problem = data::build_unicycle_batch_problem(
            &odometry,
            &rb,
            &landmarks,
            laser_offset,
            GroupElement::identity(GroupKind::Se2),
            p0,
            q,
            r.clone(),
        )?;
        (problem, None)
    };

    let inputs: Vec<ProcessInput> = problem.steps.iter().map(|s| s.input).collect();
    let initial = dead_reckon(
        &problem.prior_mean,
        &problem.model,
        &inputs,
        &problem.timestamps,
    )?;
    let ls = estimation::build_least_squares(&problem, initial, Side::Right)?;
    let mut options = cfg.to_solve_options();
    if let Some(b) = backend {
        options.backend = b.into();
    }
    let solution = solver::solve(&ls, &options)?;
    report_solution("batch-se2", &solution);

    let states = solution.state.clone().unpack()?;
    data::write_se2_trajectory_csv(
        BufWriter::new(File::create(out_dir.join("trajectory_se2.csv"))?),
        &problem.timestamps,
        &states,
    )?;
    data::write_convergence_csv(
        BufWriter::new(File::create(out_dir.join("convergence_se2.csv"))?),
        &solution.history,
    )?;
    if let Some(truth) = truth {
        let covs = solver::posterior_block_diagonal(&ls, &solution.state, &options)?;
        let sigmas: Vec<Vector3<f64>> = covs
            .iter()
            .map(|c| Vector3::new(c[(0, 0)].sqrt(), c[(1, 1)].sqrt(), c[(2, 2)].sqrt()))
            .collect();
        data::write_se2_error_csv(
            BufWriter::new(File::create(out_dir.join("errors_se2.csv"))?),
            &problem.timestamps,
            &states,
            &truth,
            &sigmas,
        )?;
        let max_pos = states
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a.se2_position() - b.se2_position()).norm())
            .fold(0.0f64, f64::max);
        println!("max position error vs truth: {max_pos:.4} m");
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_selftest() -> Result<(), CliError> {
    let results = selftest::run_all();
    let mut failed = false;
    for suite in &results {
        if suite.passed() {
            println!("PASS {}", suite.name);
        } else {
            failed = true;
            println!("FAIL {} ({} failures)", suite.name, suite.failures.len());
            for f in suite.failures.iter().take(5) {
                println!("     {f}");
            }
        }
    }
    if failed {
        return Err(CliError::Numerical("selftest failures".into()));
    }
    Ok(())
}
