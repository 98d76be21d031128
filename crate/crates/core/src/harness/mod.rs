//! Experiment presets, metrics and CSV output.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod telemetry;

pub use config::{ExperimentConfig, ExperimentId, RobotConfig, Scenario, TrajectoryConfig, PRESET_NAMES};
pub use experiment::{
    build_session, load_or_record_demo, pattern_sweep, replay_run, run_experiment, simulate, write_run, RunData, RunOutput,
};
pub use metrics::{compute_metrics, RobotMetrics, RunMetrics, TelemetryRow};
