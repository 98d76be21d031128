use thiserror::Error;

use crate::link::RobotRole;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target ({x:.6}, {y:.6}) m is outside the reachable annulus")]
    Unreachable { x: f64, y: f64 },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("state diverged at t = {t:.4} s (non-finite component)")]
    NumericalDivergence { t: f64 },
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("singular configuration, |det J| = {det:.3e}")]
    SingularConfiguration { det: f64 },
    #[error("observer inertia is ill-conditioned (condition number {cond:.3e})")]
    IllConditionedObserver { cond: f64 },
    #[error("trajectory-tracking mode needs desired velocity and acceleration")]
    MissingDerivatives,
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("tick {tick} is not after the previous tick {last}")]
    NonMonotonicTick { tick: u64, last: u64 },
    #[error("replay time {t:.4} s is outside [0, {duration:.4}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("demo has no samples")]
    EmptyDemo,
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("demo file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("transport down: {0}")]
    TransportDown(String),
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
}

impl From<std::io::Error> for LinkError {
    fn from(e: std::io::Error) -> Self {
        LinkError::TransportDown(e.to_string())
    }
}

/// Errors raised while advancing a bilateral session, attributed to the robot
/// that produced them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{robot} plant at tick {tick}: {source}")]
    Plant {
        robot: RobotRole,
        tick: u64,
        #[source]
        source: PlantError,
    },
    #[error("{robot} controller at tick {tick}: {source}")]
    Control {
        robot: RobotRole,
        tick: u64,
        #[source]
        source: ControlError,
    },
    #[error("{robot} reference at tick {tick}: {source}")]
    Reference {
        robot: RobotRole,
        tick: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error("{robot} link at tick {tick}: {source}")]
    Link {
        robot: RobotRole,
        tick: u64,
        #[source]
        source: LinkError,
    },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SessionError),
    #[error("metrics window is empty after a {warmup:.3} s warm-up")]
    EmptyWindow { warmup: f64 },
    #[error("demo: {0}")]
    Demo(#[from] TrajectoryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigInvalid(_) | HarnessError::Demo(_) => 2,
            HarnessError::Simulation(_) | HarnessError::EmptyWindow { .. } => 3,
            HarnessError::Io(_) => 2,
        }
    }
}
