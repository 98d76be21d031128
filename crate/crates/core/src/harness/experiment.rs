//! Running presets: builds the robots, drives the tick loop, collects
//! telemetry and writes the outputs.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector2;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentId, RobotConfig, Scenario};
use super::metrics::{compute_metrics, rows_from_frame, RunMetrics, TelemetryRow};
use super::telemetry;
use crate::control::{ControlMode, RobotController};
use crate::error::{HarnessError, SessionError};
use crate::kin2::{self, JointState};
use crate::link::{HandTarget, MasterReference, RobotFrame, RobotRole, RobotSetup, Session};
use crate::plant::Plant;
use crate::traj::{RecordedDemo, TrajectoryKind, TrajectorySpec};

/// One simulated run: its telemetry, metrics and (for exp3/exp4) the
/// recorded demo.
#[derive(Debug, Clone)]
pub struct RunData {
    pub label: String,
    pub rows: Vec<TelemetryRow>,
    pub metrics: RunMetrics,
    pub demo: Option<RecordedDemo>,
}

impl RunData {
    pub fn rows_of(&self, role: RobotRole) -> impl Iterator<Item = &TelemetryRow> {
        self.rows.iter().filter(move |r| r.robot == role)
    }
}

fn ticks(cfg: &ExperimentConfig) -> u64 {
    (cfg.duration / cfg.master.plant.dt()).round() as u64
}

fn start_state(robot: &RobotConfig, x: &Vector2<f64>) -> Result<JointState, HarnessError> {
    kin2::inverse_kinematics(&robot.plant.true_model, x)
        .map(JointState::at_rest)
        .map_err(|e| HarnessError::ConfigInvalid(format!("start point {x:?} unreachable: {e}")))
}

fn default_warmup(cfg: &ExperimentConfig) -> f64 {
    if let Some(w) = cfg.warmup {
        return w;
    }
    let spec = match cfg.trajectory.kind {
        TrajectoryKind::Replay => return 0.0,
        _ => cfg.trajectory.spec().or(cfg.hand_path),
    };
    spec.and_then(|s| s.period()).unwrap_or(0.0)
}

fn label_of(cfg: &ExperimentConfig) -> String {
    match cfg.experiment {
        ExperimentId::Exp2 | ExperimentId::Custom => format!("{}-{}", cfg.experiment.as_str(), cfg.trajectory.kind.name()),
        ExperimentId::Exp4 => match cfg.scenario {
            Scenario::Wall => "exp4-wall".into(),
            Scenario::Payload => "exp4-payload".into(),
            Scenario::Free => "exp4-free".into(),
        },
        id => id.as_str().into(),
    }
}

fn pattern(cfg: &ExperimentConfig) -> Result<TrajectorySpec, HarnessError> {
    cfg.trajectory
        .spec()
        .ok_or_else(|| HarnessError::ConfigInvalid(format!("{} needs an analytic trajectory", cfg.experiment.as_str())))
}

/// One robot alone on `spec`, as in exp1.
fn single_robot(
    cfg: &ExperimentConfig,
    role: RobotRole,
    robot: &RobotConfig,
    spec: &TrajectorySpec,
    ndob: bool,
) -> Result<RunData, HarnessError> {
    let dt = robot.plant.dt();
    let mut plant = Plant::new(robot.plant.clone(), start_state(robot, &spec.sample(0.0).x)?)
        .map_err(|source| SessionError::Plant { robot: role, tick: 0, source })?;
    let mut controller = tracking_controller(robot, ndob)?;
    let mut rows = Vec::with_capacity(ticks(cfg) as usize);
    for tick in 0..ticks(cfg) {
        let desired = spec.sample(tick as f64 * dt);
        let s = *plant.state();
        let out = controller
            .compute(&s, &desired, &Vector2::zeros())
            .map_err(|source| SessionError::Control { robot: role, tick, source })?;
        let step = plant
            .step(&out.tau_cmd, None)
            .map_err(|source| SessionError::Plant { robot: role, tick, source })?;
        controller
            .observe(&s, &step.tau_applied, &step.state.qdot, dt)
            .map_err(|source| SessionError::Control { robot: role, tick, source })?;
        rows.push(TelemetryRow {
            tick,
            t: (tick + 1) as f64 * dt,
            robot: role,
            frame: RobotFrame {
                q: step.state.q,
                qdot: step.state.qdot,
                x: plant.ee_position(),
                x_d: desired.x,
                tau: step.tau_applied,
                tau_ndob: if ndob { out.tau_ndob } else { Vector2::zeros() },
            },
            f_ff: Vector2::zeros(),
        });
    }
    let metrics = compute_metrics(&rows, default_warmup(cfg))?;
    Ok(RunData {
        label: format!("exp1-{role}-ndob-{}", if ndob { "on" } else { "off" }),
        rows,
        metrics,
        demo: None,
    })
}

/// Tracking controller with the observer forced to `ndob`.
fn tracking_controller(robot: &RobotConfig, ndob: bool) -> Result<RobotController, HarnessError> {
    let mut r = robot.clone();
    r.ndob_enabled = true;
    r.controller(ControlMode::tracking(ndob))
}

/// A master/second session from `cfg`, both robots at rest: the master at
/// `start`, the second at the mapped point.
pub fn build_session(
    cfg: &ExperimentConfig,
    reference: MasterReference,
    master_mode: ControlMode,
    start: Vector2<f64>,
) -> Result<Session, HarnessError> {
    let master = RobotSetup {
        plant: cfg.master.plant.clone(),
        controller: cfg.master.controller(master_mode)?,
        initial: start_state(&cfg.master, &start)?,
    };
    let second = RobotSetup {
        plant: cfg.second.plant.clone(),
        controller: cfg.second.controller(ControlMode::tracking(true))?,
        initial: start_state(&cfg.second, &(start + cfg.session.offset))?,
    };
    Ok(Session::new(cfg.session.clone(), master, second, reference)?)
}

fn teleop(
    cfg: &ExperimentConfig,
    reference: MasterReference,
    master_mode: ControlMode,
    start: Vector2<f64>,
    record: bool,
) -> Result<RunData, HarnessError> {
    let mut session = build_session(cfg, reference, master_mode, start)?;
    if record {
        let control_rate = 1.0 / session.dt();
        session.start_recording(
            RecordedDemo::new(cfg.record_rate, control_rate)
                .with_metadata("date", cfg.date.clone())
                .with_metadata("seed", cfg.seed.to_string())
                .with_metadata("source", label_of(cfg)),
        );
    }
    let mut rows = Vec::with_capacity(2 * ticks(cfg) as usize);
    session.run(ticks(cfg), |f| rows.extend(rows_from_frame(f)))?;
    let metrics = compute_metrics(&rows, default_warmup(cfg))?;
    Ok(RunData {
        label: label_of(cfg),
        rows,
        metrics,
        demo: session.stop_recording(),
    })
}

fn phri_run(cfg: &ExperimentConfig) -> Result<RunData, HarnessError> {
    let hand = cfg
        .hand_path
        .ok_or_else(|| HarnessError::ConfigInvalid("pHRI experiments need a hand path".into()))?;
    teleop(
        cfg,
        MasterReference::Hand(HandTarget::Path(hand)),
        ControlMode::phri(cfg.feedback_enabled),
        hand.sample(0.0).x,
        true,
    )
}

/// The demo exp5 replays: the configured file, or a fresh exp3 run.
pub fn load_or_record_demo(cfg: &ExperimentConfig) -> Result<RecordedDemo, HarnessError> {
    if let Some(path) = &cfg.trajectory.demo {
        let f = fs::File::open(path)?;
        return Ok(RecordedDemo::read_csv(std::io::BufReader::new(f))?);
    }
    let mut rec = ExperimentConfig::preset("exp3")?;
    rec.seed = cfg.seed;
    rec.date = cfg.date.clone();
    rec.duration = cfg.duration;
    rec.record_rate = cfg.record_rate;
    rec.session = cfg.session.clone();
    rec.master = cfg.master.clone();
    rec.second = cfg.second.clone();
    if let Some(h) = cfg.hand_path {
        rec.hand_path = Some(h);
    }
    phri_run(&rec)?
        .demo
        .ok_or_else(|| HarnessError::ConfigInvalid("exp3 produced no demo".into()))
}

/// Replay `demo` on the master with the given derivative cutoff. The run
/// ends with the demo at the latest, so the master is never stopped dead.
pub fn replay_run(cfg: &ExperimentConfig, demo: Arc<RecordedDemo>, cutoff_hz: f64) -> Result<RunData, HarnessError> {
    let start = demo.position_at(0.0)?;
    let dt = cfg.master.plant.dt();
    let mut cfg = cfg.clone();
    cfg.duration = cfg.duration.min((demo.duration() / dt).floor() * dt);
    let mut run = teleop(
        &cfg,
        MasterReference::replay(demo, dt, cutoff_hz),
        ControlMode::tracking(true),
        start,
        false,
    )?;
    if cutoff_hz <= 0.0 {
        run.label.push_str("-unfiltered");
    }
    Ok(run)
}

/// Simulate a configuration without touching the filesystem (except to read
/// a configured demo).
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<RunData>, HarnessError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentId::Exp1 => {
            let spec = pattern(cfg)?;
            let shifted = TrajectorySpec {
                center: spec.center + cfg.session.offset,
                ..spec
            };
            let mut runs = Vec::with_capacity(4);
            for (role, robot, s) in [
                (RobotRole::Master, &cfg.master, &spec),
                (RobotRole::Second, &cfg.second, &shifted),
            ] {
                for ndob in [false, true] {
                    runs.push(single_robot(cfg, role, robot, s, ndob)?);
                }
            }
            Ok(runs)
        }
        ExperimentId::Exp2 | ExperimentId::Custom if cfg.trajectory.kind != TrajectoryKind::Replay => {
            let spec = pattern(cfg)?;
            let mode = ControlMode::tracking(cfg.master.ndob_enabled);
            Ok(vec![teleop(cfg, MasterReference::Trajectory(spec), mode, spec.sample(0.0).x, false)?])
        }
        ExperimentId::Exp3 | ExperimentId::Exp4 => Ok(vec![phri_run(cfg)?]),
        ExperimentId::Exp2 | ExperimentId::Custom | ExperimentId::Exp5 => {
            let demo = Arc::new(load_or_record_demo(cfg)?);
            Ok(vec![replay_run(cfg, demo, cfg.trajectory.replay_cutoff)?])
        }
    }
}

/// The exp2 configuration once per pattern.
pub fn pattern_sweep(cfg: &ExperimentConfig) -> Vec<ExperimentConfig> {
    TrajectoryKind::PATTERNS
        .iter()
        .map(|&kind| {
            let mut c = cfg.clone();
            c.trajectory.kind = kind;
            c.trajectory.shape = None;
            c
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    label: &'a str,
    seed: u64,
    version: &'a str,
    #[serde(flatten)]
    metrics: &'a RunMetrics,
}

/// Files written for one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub label: String,
    pub metrics: RunMetrics,
    pub telemetry: PathBuf,
    pub summary: PathBuf,
    pub demo: Option<PathBuf>,
}

/// Write one run's telemetry CSV, metrics summary and demo into `dir`.
pub fn write_run(cfg: &ExperimentConfig, run: &RunData, dir: &Path) -> Result<RunOutput, HarnessError> {
    fs::create_dir_all(dir)?;
    let telemetry = dir.join(format!("{}.csv", run.label));
    let config_echo = cfg.to_toml();
    telemetry::write_csv(
        BufWriter::new(fs::File::create(&telemetry)?),
        &run.label,
        cfg.seed,
        &config_echo,
        &run.rows,
    )?;
    let summary = dir.join(format!("{}.metrics.toml", run.label));
    let text = toml::to_string(&MetricsFile {
        label: &run.label,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        metrics: &run.metrics,
    })
    .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
    fs::write(&summary, text)?;
    let demo = match &run.demo {
        Some(d) => {
            let path = dir.join(format!("{}.demo.csv", run.label));
            d.write_csv(BufWriter::new(fs::File::create(&path)?))?;
            Some(path)
        }
        None => None,
    };
    Ok(RunOutput {
        label: run.label.clone(),
        metrics: run.metrics,
        telemetry,
        summary,
        demo,
    })
}

/// Simulate and write every run of `cfg` to its output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>, HarnessError> {
    simulate(cfg)?
        .iter()
        .map(|run| write_run(cfg, run, &cfg.output_dir))
        .collect()
}
