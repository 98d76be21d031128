//! Tracking-error, torque and feedback-force summaries of a telemetry stream.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::link::{RobotFrame, RobotRole, TelemetryFrame};

/// One robot at one tick, as written to CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub tick: u64,
    pub t: f64,
    pub robot: RobotRole,
    pub frame: RobotFrame,
    /// Feedback force; zero on second-robot rows.
    pub f_ff: Vector2<f64>,
}

impl TelemetryRow {
    pub fn error(&self) -> f64 {
        (self.frame.x - self.frame.x_d).norm()
    }
}

/// Split a session frame into its master and second rows.
pub fn rows_from_frame(f: &TelemetryFrame) -> [TelemetryRow; 2] {
    [
        TelemetryRow {
            tick: f.tick,
            t: f.t,
            robot: RobotRole::Master,
            frame: f.master,
            f_ff: f.f_ff,
        },
        TelemetryRow {
            tick: f.tick,
            t: f.t,
            robot: RobotRole::Second,
            frame: f.second,
            f_ff: Vector2::zeros(),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotMetrics {
    /// RMS of `‖x - x_d‖` after the warm-up, m.
    pub rms_tracking_error: f64,
    /// Per joint, after the warm-up, N·m.
    pub max_abs_torque: [f64; 2],
    /// Time after which the error stays within twice the RMS, s.
    pub settle_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub master: Option<RobotMetrics>,
    pub second: Option<RobotMetrics>,
    /// Largest feedback-force component after the warm-up, N.
    pub max_abs_feedback_force: f64,
    pub warmup: f64,
}

impl RunMetrics {
    pub fn robot(&self, role: RobotRole) -> Option<&RobotMetrics> {
        match role {
            RobotRole::Master => self.master.as_ref(),
            RobotRole::Second => self.second.as_ref(),
        }
    }
}

fn robot_metrics(rows: &[&TelemetryRow], warmup: f64) -> Option<RobotMetrics> {
    let window: Vec<&&TelemetryRow> = rows.iter().filter(|r| r.t >= warmup).collect();
    if window.is_empty() {
        return None;
    }
    let mse = window.iter().map(|r| r.error().powi(2)).sum::<f64>() / window.len() as f64;
    let rms = mse.sqrt();
    let mut peak = [0.0f64; 2];
    for r in &window {
        for (p, tau) in peak.iter_mut().zip(r.frame.tau.iter()) {
            *p = p.max(tau.abs());
        }
    }
    let bound = 2.0 * rms;
    let settle = match rows.iter().rposition(|r| r.error() > bound) {
        None => 0.0,
        Some(i) if i + 1 < rows.len() => rows[i + 1].t,
        Some(i) => rows[i].t,
    };
    Some(RobotMetrics {
        rms_tracking_error: rms,
        max_abs_torque: peak,
        settle_time: settle,
    })
}

/// Metrics over all frames with `t ≥ warmup`.
pub fn compute_metrics(rows: &[TelemetryRow], warmup: f64) -> Result<RunMetrics, HarnessError> {
    let of = |role| rows.iter().filter(|r| r.robot == role).collect::<Vec<_>>();
    let master = robot_metrics(&of(RobotRole::Master), warmup);
    let second = robot_metrics(&of(RobotRole::Second), warmup);
    if master.is_none() && second.is_none() {
        return Err(HarnessError::EmptyWindow { warmup });
    }
    let max_abs_feedback_force = rows
        .iter()
        .filter(|r| r.t >= warmup)
        .map(|r| r.f_ff.amax())
        .fold(0.0, f64::max);
    Ok(RunMetrics {
        master,
        second,
        max_abs_feedback_force,
        warmup,
    })
}

/// Population variance of a sequence (0 for fewer than two values).
pub fn variance(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}
