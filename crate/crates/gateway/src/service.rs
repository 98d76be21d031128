//! The session state machine, free of any I/O or threading.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use telerehab_core::control::{ControlMode, ImpedanceGains};
use telerehab_core::error::{HarnessError, SessionError};
use telerehab_core::harness::config::master_center;
use telerehab_core::harness::{build_session, ExperimentConfig};
use telerehab_core::kin2::{self, RobotModel};
use telerehab_core::link::{HandTarget, MasterReference, RobotRole, Session, TelemetryFrame};
use telerehab_core::traj::{RecordedDemo, TrajectoryKind, TrajectorySpec};
use thiserror::Error;

use crate::protocol::{Command, FrameContext, HandInput, ModeName, StateTag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("{verb} is not valid while {state}: {reason}")]
    InvalidTransition {
        verb: &'static str,
        state: StateTag,
        reason: &'static str,
    },
    #[error("{verb} needs pHRI mode")]
    ModeGuard { verb: &'static str },
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("no session is being served")]
    UnknownSession,
}

/// What a successful command hands back.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reply {
    /// The clamped hand target, for injections.
    pub target: Option<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Running,
    Stopped,
}

/// One operator session: settings that survive restarts, and the simulation
/// while running.
#[derive(Debug)]
pub struct SessionService {
    cfg: ExperimentConfig,
    mode: ModeName,
    feedback: bool,
    trajectory: TrajectoryKind,
    phase: Phase,
    session: Option<Session>,
    demo: Option<Arc<RecordedDemo>>,
}

impl SessionService {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let trajectory = match cfg.trajectory.kind {
            TrajectoryKind::Replay => TrajectoryKind::Circle,
            k => k,
        };
        Ok(SessionService {
            mode: ModeName::Tracking,
            feedback: cfg.feedback_enabled,
            trajectory,
            cfg,
            phase: Phase::Idle,
            session: None,
            demo: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.cfg.master.plant.dt()
    }

    pub fn state(&self) -> StateTag {
        match self.phase {
            Phase::Idle => StateTag::Idle,
            Phase::Stopped => StateTag::Stopped,
            Phase::Running => {
                let s = self.session.as_ref().expect("running sessions exist");
                if matches!(s.reference(), MasterReference::Replay { .. }) {
                    StateTag::Replaying
                } else if s.is_recording() {
                    StateTag::Recording
                } else if self.mode == ModeName::Phri {
                    StateTag::Phri
                } else {
                    StateTag::Tracking
                }
            }
        }
    }

    pub fn is_running(&self) -> bool {
        self.phase == Phase::Running
    }

    /// The live or last simulation.
    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// The stored demonstration, if one was recorded.
    pub fn demo(&self) -> Option<&Arc<RecordedDemo>> {
        self.demo.as_ref()
    }

    /// The master mode the next (or current) run uses.
    pub fn master_mode(&self) -> ControlMode {
        match self.mode {
            ModeName::Tracking => ControlMode::tracking(self.cfg.master.ndob_enabled),
            ModeName::Phri => ControlMode::phri(self.feedback),
        }
    }

    pub fn selected_trajectory(&self) -> TrajectoryKind {
        self.trajectory
    }

    /// Per-tick context for telemetry.
    pub fn context(&self) -> FrameContext {
        let s = self.session.as_ref();
        FrameContext {
            state: self.state(),
            hand_target: s.and_then(|s| match s.reference() {
                MasterReference::Hand(HandTarget::Live { target, .. }) => Some(*target),
                _ => None,
            }),
            replay_progress: s.and_then(Session::replay_progress),
        }
    }

    pub fn handle(&mut self, cmd: &Command) -> Result<Reply, CommandError> {
        let verb = cmd.verb();
        let state = self.state();
        let invalid = |reason| Err(CommandError::InvalidTransition { verb, state, reason });
        match cmd {
            Command::Start => {
                if self.phase == Phase::Running {
                    return invalid("the session is already running");
                }
                self.start()?;
            }
            Command::Stop => {
                if self.phase != Phase::Running {
                    return invalid("the session is not running");
                }
                self.stop();
            }
            Command::SetMode { mode, feedback } => {
                if state == StateTag::Recording {
                    return invalid("stop the recording first");
                }
                self.mode = *mode;
                if let Some(fb) = feedback {
                    self.feedback = *fb;
                }
                if self.phase == Phase::Running {
                    self.apply_mode()?;
                }
            }
            Command::SelectTrajectory { kind } => {
                if *kind == TrajectoryKind::Replay {
                    return Err(CommandError::BadArgs("replays start with start_replay".into()));
                }
                if state == StateTag::Recording {
                    return invalid("stop the recording first");
                }
                self.trajectory = *kind;
                if self.phase == Phase::Running && self.mode == ModeName::Tracking {
                    let spec = self.pattern()?;
                    self.running().set_reference(MasterReference::Trajectory(spec));
                }
            }
            Command::StartRecord => match state {
                StateTag::Tracking | StateTag::Phri => {
                    let demo = RecordedDemo::new(self.cfg.record_rate, 1.0 / self.dt())
                        .with_metadata("source", "gateway")
                        .with_metadata("mode", if self.mode == ModeName::Phri { "phri" } else { "tracking" });
                    self.running().start_recording(demo);
                }
                StateTag::Recording => return invalid("already recording"),
                StateTag::Replaying => return invalid("a replay is in progress"),
                _ => return invalid("the session is not running"),
            },
            Command::StopRecord => {
                if state != StateTag::Recording {
                    return invalid("not recording");
                }
                self.finish_recording();
            }
            Command::StartReplay { cutoff } => {
                let cutoff = cutoff.unwrap_or(self.cfg.trajectory.replay_cutoff);
                if !(cutoff.is_finite() && cutoff >= 0.0) {
                    return Err(CommandError::BadArgs(format!("cutoff must be a non-negative frequency, got {cutoff}")));
                }
                match state {
                    StateTag::Tracking | StateTag::Phri | StateTag::Replaying => {}
                    StateTag::Recording => return invalid("stop the recording first"),
                    _ => return invalid("the session is not running"),
                }
                let demo = match &self.demo {
                    Some(d) if d.len() >= 2 => d.clone(),
                    Some(_) => return invalid("the stored demo is too short"),
                    None => return invalid("no demo has been recorded"),
                };
                self.mode = ModeName::Tracking;
                let dt = self.dt();
                let mode = self.master_mode();
                let s = self.running();
                s.set_mode(RobotRole::Master, mode);
                s.set_reference(MasterReference::replay(demo, dt, cutoff));
            }
            Command::SetGains { robot, stiffness, damping } => {
                let k = *stiffness;
                let d = damping.unwrap_or(2.0 * k.sqrt());
                if !(k.is_finite() && k > 0.0 && d.is_finite() && d >= 0.0) {
                    return Err(CommandError::BadArgs(format!("gains K = {k}, D = {d} are not usable")));
                }
                let gains = ImpedanceGains {
                    stiffness: Matrix2::identity() * k,
                    damping: Matrix2::identity() * d,
                };
                gains.validate(true).map_err(|e| CommandError::BadArgs(e.to_string()))?;
                match robot {
                    RobotRole::Master => self.cfg.master.gains = gains,
                    RobotRole::Second => self.cfg.second.gains = gains,
                }
                if let Some(s) = &mut self.session {
                    s.controller_mut(*robot).gains = gains;
                }
            }
            Command::InjectHandTarget { x, y, grip } => {
                let target = self.inject(verb, HandInput { x: *x, y: *y, grip: *grip })?;
                return Ok(Reply { target: Some(target) });
            }
        }
        Ok(Reply::default())
    }

    /// Live drag input; returns the clamped target.
    pub fn input(&mut self, input: HandInput) -> Result<Vector2<f64>, CommandError> {
        self.inject("input", input)
    }

    /// Advance one tick. A failed tick stops the session.
    pub fn step(&mut self) -> Result<Option<TelemetryFrame>, SessionError> {
        if self.phase != Phase::Running {
            return Ok(None);
        }
        let s = self.running();
        let frame = match s.step() {
            Ok(f) => f,
            Err(e) => {
                self.stop();
                return Err(e);
            }
        };
        // A finished replay leaves the master holding its last sample.
        if let MasterReference::Replay { demo, .. } = s.reference() {
            if s.replay_progress() >= Some(1.0) {
                let end = demo.samples.last().map(|p| p.x).unwrap_or(frame.master.x);
                s.set_reference(MasterReference::Hold(end));
            }
        }
        Ok(Some(frame))
    }

    /// Stop the run, keeping any recording as the stored demo.
    pub fn stop(&mut self) {
        if self.phase == Phase::Running {
            self.finish_recording();
            self.phase = Phase::Stopped;
        }
    }

    fn start(&mut self) -> Result<(), CommandError> {
        let (reference, start) = match self.mode {
            ModeName::Tracking => {
                let spec = self.pattern()?;
                (MasterReference::Trajectory(spec), spec.sample(0.0).x)
            }
            ModeName::Phri => {
                let home = self.home();
                (MasterReference::Hand(HandTarget::Live { target: home, grip: false }), home)
            }
        };
        let session = build_session(&self.cfg, reference, self.master_mode(), start)
            .map_err(|e| CommandError::BadArgs(e.to_string()))?;
        self.session = Some(session);
        self.phase = Phase::Running;
        Ok(())
    }

    fn apply_mode(&mut self) -> Result<(), CommandError> {
        let mode = self.master_mode();
        let reference = match self.mode {
            ModeName::Tracking => MasterReference::Trajectory(self.pattern()?),
            ModeName::Phri => {
                // Grip released: the master stays where it is until dragged.
                let here = self.running().plant(RobotRole::Master).ee_position();
                MasterReference::Hand(HandTarget::Live { target: here, grip: false })
            }
        };
        let s = self.running();
        s.set_mode(RobotRole::Master, mode);
        s.set_reference(reference);
        Ok(())
    }

    fn inject(&mut self, verb: &'static str, input: HandInput) -> Result<Vector2<f64>, CommandError> {
        if self.mode != ModeName::Phri {
            return Err(CommandError::ModeGuard { verb });
        }
        if self.phase != Phase::Running || self.state() == StateTag::Replaying {
            return Err(CommandError::InvalidTransition {
                verb,
                state: self.state(),
                reason: "no live hand is driving the master",
            });
        }
        let raw = Vector2::new(input.x, input.y);
        if !(raw[0].is_finite() && raw[1].is_finite()) {
            return Err(CommandError::BadArgs(format!("target ({}, {}) is not finite", input.x, input.y)));
        }
        let target = clamp_target(&self.cfg.master.plant.true_model, &raw, &self.home());
        let accepted = self.running().set_hand_input(target, input.grip);
        debug_assert!(accepted, "pHRI sessions are driven by a live hand");
        Ok(target)
    }

    fn finish_recording(&mut self) {
        if let Some(demo) = self.session.as_mut().and_then(Session::stop_recording) {
            self.demo = Some(Arc::new(demo));
        }
    }

    fn pattern(&self) -> Result<TrajectorySpec, CommandError> {
        let mut t = self.cfg.trajectory.clone();
        if t.kind != self.trajectory {
            t.kind = self.trajectory;
            t.shape = None;
        }
        t.spec()
            .ok_or_else(|| CommandError::BadArgs(format!("{} has no analytic pattern", self.trajectory.name())))
    }

    fn home(&self) -> Vector2<f64> {
        self.cfg.trajectory.center.unwrap_or_else(master_center)
    }

    fn running(&mut self) -> &mut Session {
        self.session.as_mut().expect("running sessions exist")
    }
}

/// Nearest reachable point. Boundary points can land a hair outside the
/// joint limits after the IK round trip; those are pulled toward `inside`
/// in joint space, where the limit polygon is convex.
pub fn clamp_target(model: &RobotModel, x: &Vector2<f64>, inside: &Vector2<f64>) -> Vector2<f64> {
    let p = kin2::clamp_to_workspace(model, x);
    if kin2::in_workspace(model, &p) {
        return p;
    }
    let (Ok(q), Ok(qc)) = (kin2::inverse_kinematics(model, &p), kin2::inverse_kinematics(model, inside)) else {
        return *inside;
    };
    let mut eps = 1e-12;
    while eps < 1.0 {
        let c = kin2::forward_kinematics(model, &(q + (qc - q) * eps));
        if kin2::in_workspace(model, &c) {
            return c;
        }
        eps *= 4.0;
    }
    *inside
}
