//! JSON messages exchanged over the `/session` WebSocket.
//!
//! Client to server: `{"cmd": verb, ...}` or `{"input": {"x", "y", "grip"}}`.
//! Server to client: `{"telemetry": {...}}`, `{"ack": {...}}` or
//! `{"state": tag}`. All numbers are SI.

use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use telerehab_core::link::{RobotFrame, RobotRole, TelemetryFrame};
use telerehab_core::traj::TrajectoryKind;

/// Master operating mode as the console names it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Tracking,
    Phri,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Start,
    Stop,
    SetMode {
        mode: ModeName,
        /// Render the second robot's force on the master (pHRI only).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback: Option<bool>,
    },
    SelectTrajectory {
        kind: TrajectoryKind,
    },
    StartRecord,
    StopRecord,
    StartReplay {
        /// Derivative filter cutoff in Hz; 0 disables the filter.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    SetGains {
        robot: RobotRole,
        /// N/m, applied isotropically.
        stiffness: f64,
        /// N·s/m; critical damping `2√k` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        damping: Option<f64>,
    },
    InjectHandTarget {
        x: f64,
        y: f64,
        #[serde(default = "gripped")]
        grip: bool,
    },
}

fn gripped() -> bool {
    true
}

impl Command {
    pub fn verb(&self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Stop => "stop",
            Command::SetMode { .. } => "set_mode",
            Command::SelectTrajectory { .. } => "select_trajectory",
            Command::StartRecord => "start_record",
            Command::StopRecord => "stop_record",
            Command::StartReplay { .. } => "start_replay",
            Command::SetGains { .. } => "set_gains",
            Command::InjectHandTarget { .. } => "inject_hand_target",
        }
    }

    /// Every verb with representative arguments.
    pub fn alphabet() -> Vec<Command> {
        vec![
            Command::Start,
            Command::Stop,
            Command::SetMode { mode: ModeName::Tracking, feedback: None },
            Command::SetMode { mode: ModeName::Phri, feedback: Some(true) },
            Command::SelectTrajectory { kind: TrajectoryKind::Rose },
            Command::StartRecord,
            Command::StopRecord,
            Command::StartReplay { cutoff: None },
            Command::SetGains { robot: RobotRole::Second, stiffness: 25.0, damping: None },
            Command::InjectHandTarget { x: 0.3, y: 0.0, grip: true },
        ]
    }
}

/// Live operator input: the dragged point and whether it is held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandInput {
    pub x: f64,
    pub y: f64,
    pub grip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Command(Command),
    Input(HandInput),
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ParseError::new(None, e))?;
        if let Some(input) = value.get("input") {
            return HandInput::deserialize(input)
                .map(ClientMessage::Input)
                .map_err(|e| ParseError::new(Some("input".into()), e));
        }
        let verb = value.get("cmd").and_then(|v| v.as_str()).map(str::to_owned);
        if verb.is_none() {
            return Err(ParseError {
                verb: None,
                reason: "expected a \"cmd\" or \"input\" field".into(),
            });
        }
        Command::deserialize(value).map(ClientMessage::Command).map_err(|e| ParseError::new(verb, e))
    }
}

/// A message the gateway could not understand, with the verb if one was
/// recognizable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub verb: Option<String>,
    pub reason: String,
}

impl ParseError {
    fn new(verb: Option<String>, e: serde_json::Error) -> Self {
        ParseError { verb, reason: e.to_string() }
    }
}

/// Coarse session state shown to the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateTag {
    Idle,
    Tracking,
    Phri,
    Recording,
    Replaying,
    Stopped,
}

impl StateTag {
    pub fn is_running(self) -> bool {
        !matches!(self, StateTag::Idle | StateTag::Stopped)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateTag::Idle => "idle",
            StateTag::Tracking => "tracking",
            StateTag::Phri => "phri",
            StateTag::Recording => "recording",
            StateTag::Replaying => "replaying",
            StateTag::Stopped => "stopped",
        }
    }
}

impl fmt::Display for StateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotTelemetry {
    pub q: Vector2<f64>,
    pub x: Vector2<f64>,
    pub x_d: Vector2<f64>,
    pub tau: Vector2<f64>,
}

impl From<&RobotFrame> for RobotTelemetry {
    fn from(f: &RobotFrame) -> Self {
        RobotTelemetry {
            q: f.q,
            x: f.x,
            x_d: f.x_d,
            tau: f.tau,
        }
    }
}

/// One decimated frame for one subscriber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEnvelope {
    /// Per-subscription counter, starting at 1.
    pub seq: u64,
    pub tick: u64,
    pub t: f64,
    pub state: StateTag,
    pub master: RobotTelemetry,
    pub second: RobotTelemetry,
    pub f_ff: Vector2<f64>,
    pub hand_force: Vector2<f64>,
    /// The clamped drag target, while a live hand drives the master.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_target: Option<Vector2<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_progress: Option<f64>,
}

/// Session context attached to every envelope of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameContext {
    pub state: StateTag,
    pub hand_target: Option<Vector2<f64>>,
    pub replay_progress: Option<f64>,
}

impl TelemetryEnvelope {
    pub fn new(seq: u64, frame: &TelemetryFrame, ctx: &FrameContext) -> Self {
        TelemetryEnvelope {
            seq,
            tick: frame.tick,
            t: frame.t,
            state: ctx.state,
            master: (&frame.master).into(),
            second: (&frame.second).into(),
            f_ff: frame.f_ff,
            hand_force: frame.hand_force,
            hand_target: ctx.hand_target,
            replay_progress: ctx.replay_progress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub cmd: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Echo of the clamped target for hand injection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vector2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerMessage {
    Telemetry(TelemetryEnvelope),
    Ack(Ack),
    State(StateTag),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}
