//! Experiment configuration and the five presets.
//!
//! Every preset starts from the published parameterization (the reference gains,
//! identified model as the controller estimate) and only varies the
//! scenario. Files are TOML; a file names its base preset with
//! `experiment = "..."` and overrides any subset of keys.

use std::path::PathBuf;
use std::sync::OnceLock;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::control::{ControlMode, ImpedanceGains, NdobConfig, RobotController};
use crate::error::HarnessError;
use crate::kin2::{self, RobotModel};
use crate::link::SessionConfig;
use crate::plant::{PlantConfig, Wall};
use crate::traj::{Shape, TrajectoryKind, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    /// Each robot alone on the circle, observer off and on.
    Exp1,
    /// Teleoperated tracking of a pattern, no feedback.
    Exp2,
    /// Master moved by a (scripted) hand, second follows, demo recorded.
    Exp3,
    /// Exp3 with the second robot touching a wall or dragging a payload.
    Exp4,
    /// Master replays the exp3 demo.
    Exp5,
    Custom,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::Exp4 => "exp4",
            ExperimentId::Exp5 => "exp5",
            ExperimentId::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Free,
    Wall,
    Payload,
}

/// Plant and controller of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    /// The controller's model of the robot.
    pub estimate: RobotModel,
    pub plant: PlantConfig,
    pub gains: ImpedanceGains,
    pub ndob: NdobConfig,
    pub ndob_enabled: bool,
    /// Keep the damper of the pHRI law.
    pub phri_damping: bool,
}

impl RobotConfig {
    /// Black robot: identified model, mild plant mismatch, reference gains.
    pub fn master_default() -> Self {
        RobotConfig {
            estimate: identified(RobotModel::master_black()),
            plant: PlantConfig::master_default(),
            gains: ImpedanceGains::master_default(),
            ndob: NdobConfig::master_default(),
            ndob_enabled: true,
            phri_damping: true,
        }
    }

    /// White robot: the black robot's identified coefficients on white
    /// kinematics, heavier true plant, reference gains.
    pub fn second_default() -> Self {
        RobotConfig {
            estimate: identified(RobotModel::second_white()),
            plant: PlantConfig::second_default(),
            gains: ImpedanceGains::second_default(),
            ndob: NdobConfig::second_default(),
            ndob_enabled: true,
            phri_damping: true,
        }
    }

    pub fn controller(&self, mut mode: ControlMode) -> Result<RobotController, HarnessError> {
        mode.ndob_enabled &= self.ndob_enabled;
        let mut c = RobotController::new(
            self.estimate.clone(),
            self.gains,
            self.ndob,
            mode,
            self.plant.torque_limit,
        )
        .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        c.phri_damping = self.phri_damping;
        Ok(c)
    }
}

fn identified(mut m: RobotModel) -> RobotModel {
    m.alpha = kin2::IDENTIFIED_ALPHA;
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryKind,
    /// Pattern parameters; the kind's published values when absent.
    pub shape: Option<Shape>,
    /// Pattern origin in the master frame; the master workspace centroid when
    /// absent.
    pub center: Option<Vector2<f64>>,
    pub time_scale: f64,
    /// Demo file for replay; exp5 records one via exp3 when absent.
    pub demo: Option<PathBuf>,
    /// Low-pass cutoff for replay derivatives, Hz (0 disables).
    pub replay_cutoff: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            kind: TrajectoryKind::Circle,
            shape: None,
            center: None,
            time_scale: 1.0,
            demo: None,
            replay_cutoff: 50.0,
        }
    }
}

impl TrajectoryConfig {
    /// The analytic pattern, if this is not a replay.
    pub fn spec(&self) -> Option<TrajectorySpec> {
        let shape = self.shape.or_else(|| self.kind.default_shape())?;
        Some(TrajectorySpec {
            shape,
            center: self.center.unwrap_or_else(master_center),
            time_scale: self.time_scale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub scenario: Scenario,
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds excluded from metrics; one trajectory period when absent.
    pub warmup: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Stamped into recorded demos; taken from config so outputs stay
    /// reproducible.
    pub date: String,
    pub feedback_enabled: bool,
    /// Rate at which demos are stored, Hz.
    pub record_rate: f64,
    pub trajectory: TrajectoryConfig,
    /// Scripted operator path for pHRI experiments, in the master frame.
    pub hand_path: Option<TrajectorySpec>,
    pub session: SessionConfig,
    pub master: RobotConfig,
    pub second: RobotConfig,
}

/// Master workspace centroid, the default pattern origin.
pub fn master_center() -> Vector2<f64> {
    static C: OnceLock<Vector2<f64>> = OnceLock::new();
    *C.get_or_init(|| kin2::workspace_centroid(&RobotModel::master_black(), 100_000, 7))
}

pub const PRESET_NAMES: [&str; 6] = ["exp1", "exp2", "exp3", "exp4", "exp4-payload", "exp5"];

/// Payload of the drag scenario, kg.
pub const PAYLOAD_MASS: f64 = 1.130;

impl ExperimentConfig {
    fn base(id: ExperimentId) -> Self {
        ExperimentConfig {
            experiment: id,
            scenario: Scenario::Free,
            duration: 30.0,
            warmup: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            date: "1970-01-01".into(),
            feedback_enabled: false,
            record_rate: 500.0,
            trajectory: TrajectoryConfig::default(),
            hand_path: None,
            session: SessionConfig::default(),
            master: RobotConfig::master_default(),
            second: RobotConfig::second_default(),
        }
    }

    /// Scripted hand path used by exp3 and exp5.
    pub fn demo_hand_path() -> TrajectorySpec {
        TrajectorySpec::new(
            Shape::FigureEight {
                amplitude: 0.08,
                period: 10.0,
            },
            master_center(),
        )
    }

    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        let cfg = match name {
            "exp1" => Self::base(ExperimentId::Exp1),
            "exp2" | "custom" => {
                let mut c = Self::base(if name == "custom" { ExperimentId::Custom } else { ExperimentId::Exp2 });
                c.duration = 15.0;
                c
            }
            "exp3" => {
                let mut c = Self::base(ExperimentId::Exp3);
                c.duration = 20.0;
                c.warmup = Some(1.0);
                c.feedback_enabled = true;
                c.hand_path = Some(Self::demo_hand_path());
                c
            }
            "exp4" | "exp4-wall" => {
                let mut c = Self::base(ExperimentId::Exp4);
                c.scenario = Scenario::Wall;
                c.duration = 16.0;
                c.warmup = Some(1.0);
                c.feedback_enabled = true;
                let center = master_center();
                // The hand overshoots the wall by ~7.5 cm; the rendered force is set by
                // how far the second robot lags the master there.
                c.hand_path = Some(TrajectorySpec::new(Shape::Circle { radius: 0.115, period: 8.0 }, center));
                // Vertical wall 4 cm to the right of the mapped pattern center,
                // free space on the left.
                let wall_point = center + c.session.offset + Vector2::new(0.04, 0.0);
                c.second.plant.wall = Some(Wall::through(wall_point, Vector2::new(-1.0, 0.0)));
                c
            }
            "exp4-payload" => {
                let mut c = Self::base(ExperimentId::Exp4);
                c.scenario = Scenario::Payload;
                c.duration = 16.0;
                c.warmup = Some(1.0);
                c.feedback_enabled = true;
                c.hand_path = Some(TrajectorySpec::new(
                    Shape::Circle {
                        radius: 0.11,
                        period: 3.2,
                    },
                    master_center(),
                ));
                c.second.plant.payload_mass = PAYLOAD_MASS;
                c
            }
            "exp5" => {
                let mut c = Self::base(ExperimentId::Exp5);
                c.duration = 20.0;
                c.warmup = Some(0.0);
                c.trajectory.kind = TrajectoryKind::Replay;
                c.hand_path = Some(Self::demo_hand_path());
                c
            }
            other => {
                return Err(HarnessError::ConfigInvalid(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Parse a TOML file layered over the preset it names (`exp2` when
    /// unnamed).
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_over(text, None)
    }

    /// Like [`from_toml_str`](Self::from_toml_str), with `preset` taking
    /// precedence over the one the file names. A complete configuration
    /// must then describe that preset's experiment.
    pub fn from_toml_over(text: &str, preset: Option<&str>) -> Result<Self, HarnessError> {
        let bad = |e: &dyn std::fmt::Display| HarnessError::ConfigInvalid(e.to_string());
        let file: toml::Table = text.parse().map_err(|e| bad(&e))?;
        let named = match (file.get("preset"), file.get("experiment")) {
            (Some(p), _) | (None, Some(p)) => Some(
                p.as_str()
                    .ok_or_else(|| HarnessError::ConfigInvalid("`preset` must be a string".into()))?
                    .to_string(),
            ),
            (None, None) => None,
        };
        let requested = preset;
        let preset = requested.map(str::to_owned).or(named).unwrap_or_else(|| "exp2".into());
        let mut file = file;
        file.remove("preset");
        // A complete configuration (such as a CSV header echo) stands alone:
        // merging it over a preset would resurrect keys it leaves out as unset.
        if let Ok(cfg) = Self::deserialize(file.clone()) {
            if let Some(name) = requested {
                let base = Self::preset(name)?;
                if (cfg.experiment, cfg.scenario) != (base.experiment, base.scenario) {
                    return Err(HarnessError::ConfigInvalid(format!(
                        "the configuration describes {} but {name} was requested",
                        cfg.experiment.as_str()
                    )));
                }
            }
            cfg.validate()?;
            return Ok(cfg);
        }
        let base = Self::preset(&preset)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| bad(&e))?;
        merge(&mut merged, file);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if let Some(w) = self.warmup {
            if !(w >= 0.0) {
                return bad(format!("warm-up must be non-negative, got {w}"));
            }
        }
        if !(self.record_rate > 0.0) {
            return bad("record rate must be positive".into());
        }
        for (name, r) in [("master", &self.master), ("second", &self.second)] {
            r.plant
                .validate()
                .map_err(|e| HarnessError::ConfigInvalid(format!("{name}: {e}")))?;
            r.estimate
                .validate()
                .map_err(|e| HarnessError::ConfigInvalid(format!("{name}: {e}")))?;
            r.gains
                .validate(true)
                .and(r.ndob.validate())
                .map_err(|e| HarnessError::ConfigInvalid(format!("{name}: {e}")))?;
        }
        if self.master.plant.dt() != self.second.plant.dt() {
            return bad("both plants must share one control period".into());
        }
        self.session
            .channel
            .validate()
            .and(self.session.feedback.validate())
            .map_err(HarnessError::ConfigInvalid)?;
        if let Some(s) = self.trajectory.spec() {
            s.validate()?;
        }
        if let Some(p) = &self.trajectory.demo {
            if !p.is_file() {
                return bad(format!("demo file {} does not exist", p.display()));
            }
        }
        if matches!(self.experiment, ExperimentId::Exp3 | ExperimentId::Exp4) && self.hand_path.is_none() {
            return bad("pHRI experiments need a hand path".into());
        }
        Ok(())
    }
}

/// Recursively overlay `over` onto `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
