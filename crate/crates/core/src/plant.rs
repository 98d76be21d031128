//! Ground-truth simulation of one robot.
//!
//! The plant integrates the rigid-body dynamics with its own (true) parameters,
//! which generally differ from the identified model the controller uses. It
//! adds the effects the controller never sees directly: viscous friction, a
//! stiff wall, a point-mass payload at the end-effector, the operator's hand,
//! and spring-damper joint stops.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::PlantError;
use crate::kin2::{self, JointState, RobotModel};

/// Default control and integration period (1 kHz).
pub const DEFAULT_DT: f64 = 1e-3;

/// Inertia matrix of the identified model form.
pub fn inertia_matrix(model: &RobotModel, q: &Vector2<f64>) -> Matrix2<f64> {
    let [a1, a2, a3, _, _] = model.alpha;
    let off = -0.5 * a2 * (q[0] - q[1]).sin();
    Matrix2::new(a1, off, off, a3)
}

/// Coriolis/centrifugal matrix paired with [`inertia_matrix`].
///
/// Both off-diagonal entries come from the Christoffel symbols of the inertia
/// matrix, so `Ṁ - 2S` is skew-symmetric and the unforced, frictionless plant
/// conserves kinetic energy.
pub fn coriolis_matrix(model: &RobotModel, q: &Vector2<f64>, qdot: &Vector2<f64>) -> Matrix2<f64> {
    let b = 0.5 * model.alpha[1] * (q[0] - q[1]).cos();
    Matrix2::new(0.0, b * qdot[1], -b * qdot[0], 0.0)
}

pub fn friction_torque(model: &RobotModel, qdot: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(model.alpha[3] * qdot[0], model.alpha[4] * qdot[1])
}

/// A one-sided spring-damper half-plane.
///
/// The wall surface is `{x : normal·x + offset = 0}`; `normal` is the unit
/// outward normal pointing into free space, so the contact force pushes along
/// `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub normal: Vector2<f64>,
    pub offset: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Wall {
    pub const DEFAULT_STIFFNESS: f64 = 5000.0;
    pub const DEFAULT_DAMPING: f64 = 10.0;

    /// Wall through `point` whose free side lies along `outward`.
    pub fn through(point: Vector2<f64>, outward: Vector2<f64>) -> Self {
        let normal = outward.normalize();
        Wall {
            normal,
            offset: -normal.dot(&point),
            stiffness: Self::DEFAULT_STIFFNESS,
            damping: Self::DEFAULT_DAMPING,
        }
    }

    /// Depth below the surface (positive when in contact).
    pub fn penetration(&self, x: &Vector2<f64>) -> f64 {
        -(self.normal.dot(x) + self.offset)
    }

    pub fn force(&self, x: &Vector2<f64>, xdot: &Vector2<f64>) -> Vector2<f64> {
        let depth = self.penetration(x);
        if depth <= 0.0 {
            return Vector2::zeros();
        }
        let rate = -self.normal.dot(xdot);
        // No adhesion: a fast retreat cannot pull the end-effector back in.
        let magnitude = (self.stiffness * depth + self.damping * rate).max(0.0);
        self.normal * magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrationMethod {
    SemiImplicitEuler,
    Rk4,
}

impl IntegrationMethod {
    pub fn order(self) -> u32 {
        match self {
            IntegrationMethod::SemiImplicitEuler => 1,
            IntegrationMethod::Rk4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: IntegrationMethod,
    pub dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: IntegrationMethod::SemiImplicitEuler,
            dt: DEFAULT_DT,
        }
    }
}

/// Virtual spring-damper that enforces the joint stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpring {
    /// N·m/rad
    pub stiffness: f64,
    /// N·m·s/rad
    pub damping: f64,
}

impl Default for LimitSpring {
    fn default() -> Self {
        LimitSpring {
            stiffness: 500.0,
            damping: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub true_model: RobotModel,
    /// Factors that turned the identified coefficients into `true_model`.
    pub mismatch: [f64; 5],
    /// Point mass rigidly attached at the end-effector (kg).
    pub payload_mass: f64,
    pub wall: Option<Wall>,
    pub integrator: IntegratorConfig,
    pub limit_spring: LimitSpring,
    /// Per-joint actuator saturation (N·m).
    pub torque_limit: f64,
}

impl PlantConfig {
    pub const DEFAULT_TORQUE_LIMIT: f64 = 5.0;

    /// Mild mismatch for the black robot: 10 % on inertia, 50 % on friction.
    pub const MASTER_MISMATCH: [f64; 5] = [1.1, 1.1, 1.1, 1.5, 1.5];

    /// True coefficients of the white robot are unknown. These stand-ins give
    /// it about three times the inertia (longer, heavier links) and viscous
    /// friction of 0.48 and 0.52 N·m·s/rad, which reproduces the observed
    /// ≈2.5× peak-torque disparity between the robots.
    pub const SECOND_MISMATCH: [f64; 5] = [
        3.0,
        2.8,
        3.0,
        0.48 / kin2::IDENTIFIED_ALPHA[3],
        0.52 / kin2::IDENTIFIED_ALPHA[4],
    ];

    /// Plant whose true coefficients are `identified` scaled by `mismatch`.
    pub fn from_identified(identified: &RobotModel, mismatch: [f64; 5]) -> Self {
        PlantConfig {
            true_model: identified.scaled(&mismatch),
            mismatch,
            payload_mass: 0.0,
            wall: None,
            integrator: IntegratorConfig::default(),
            limit_spring: LimitSpring::default(),
            torque_limit: Self::DEFAULT_TORQUE_LIMIT,
        }
    }

    /// Plant that matches the model exactly.
    pub fn exact(model: &RobotModel) -> Self {
        Self::from_identified(model, [1.0; 5])
    }

    pub fn master_default() -> Self {
        Self::from_identified(&RobotModel::master_black(), Self::MASTER_MISMATCH)
    }

    pub fn second_default() -> Self {
        Self::from_identified(&RobotModel::second_white(), Self::SECOND_MISMATCH)
    }

    pub fn dt(&self) -> f64 {
        self.integrator.dt
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: String| Err(PlantError::InvalidConfig(m));
        self.true_model
            .validate()
            .map_err(|e| PlantError::InvalidConfig(e.to_string()))?;
        if !(self.integrator.dt > 0.0 && self.integrator.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.integrator.dt));
        }
        if !(self.payload_mass >= 0.0) {
            return bad(format!("payload mass must be non-negative, got {}", self.payload_mass));
        }
        if self.mismatch.iter().any(|f| !(*f > 0.0)) {
            return bad("mismatch factors must be positive".into());
        }
        if let Some(w) = &self.wall {
            if !(w.stiffness > 0.0) || !(w.damping >= 0.0) {
                return bad("wall stiffness must be positive and damping non-negative".into());
            }
            if (w.normal.norm() - 1.0).abs() > 1e-9 {
                return bad("wall normal must be a unit vector".into());
            }
        }
        if !(self.torque_limit > 0.0) {
            return bad("torque limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WrenchSource {
    None,
    Wall,
    Hand,
    /// Wall contact and hand force at the same time.
    Combined,
}

/// External force at the end-effector, in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalWrench {
    pub force: Vector2<f64>,
    pub source: WrenchSource,
}

impl ExternalWrench {
    pub fn none() -> Self {
        ExternalWrench {
            force: Vector2::zeros(),
            source: WrenchSource::None,
        }
    }
}

/// Wall contact plus the operator's hand force.
///
/// The payload is not part of the wrench: it is folded into the inertia
/// instead (see [`step`]).
pub fn environment_wrench(
    config: &PlantConfig,
    x: &Vector2<f64>,
    xdot: &Vector2<f64>,
    _t: f64,
    hand_force: Option<Vector2<f64>>,
) -> ExternalWrench {
    let wall = config
        .wall
        .as_ref()
        .map(|w| w.force(x, xdot))
        .filter(|f| *f != Vector2::zeros());
    match (wall, hand_force) {
        (None, None) => ExternalWrench::none(),
        (Some(f), None) => ExternalWrench {
            force: f,
            source: WrenchSource::Wall,
        },
        (None, Some(h)) => ExternalWrench {
            force: h,
            source: WrenchSource::Hand,
        },
        (Some(f), Some(h)) => ExternalWrench {
            force: f + h,
            source: WrenchSource::Combined,
        },
    }
}

/// Torque from the virtual joint stops; zero strictly inside the limits.
///
/// Every limit is written as `g(q) <= 0`; a violated one pushes back with
/// `∇g (k g + d ġ)`, which enters the dynamics with a minus sign.
pub fn limit_torque(model: &RobotModel, spring: &LimitSpring, state: &JointState) -> Vector2<f64> {
    let l = &model.limits;
    let (q, qd) = (&state.q, &state.qdot);
    let coupled = kin2::coupled_angle(q);
    let coupled_rate = qd[0] - qd[1];
    let constraints = [
        (l.q1.min - q[0], Vector2::new(-1.0, 0.0), -qd[0]),
        (q[0] - l.q1.max, Vector2::new(1.0, 0.0), qd[0]),
        (l.q2.min - q[1], Vector2::new(0.0, -1.0), -qd[1]),
        (q[1] - l.q2.max, Vector2::new(0.0, 1.0), qd[1]),
        (l.coupled.min - coupled, Vector2::new(-1.0, 1.0), -coupled_rate),
        (coupled - l.coupled.max, Vector2::new(1.0, -1.0), coupled_rate),
    ];
    let mut tau = Vector2::zeros();
    for (g, grad, rate) in constraints {
        if g > 0.0 {
            tau += grad * (spring.stiffness * g + spring.damping * rate);
        }
    }
    tau
}

/// Inertia including the payload's `m JᵀJ` contribution.
pub fn augmented_inertia(config: &PlantConfig, q: &Vector2<f64>) -> Matrix2<f64> {
    let m = inertia_matrix(&config.true_model, q);
    if config.payload_mass > 0.0 {
        let j = kin2::jacobian(&config.true_model, q);
        m + j.transpose() * j * config.payload_mass
    } else {
        m
    }
}

pub fn kinetic_energy(config: &PlantConfig, state: &JointState) -> f64 {
    0.5 * state.qdot.dot(&(augmented_inertia(config, &state.q) * state.qdot))
}

/// Clamp each joint torque to `±limit`.
pub fn saturate(tau: &Vector2<f64>, limit: f64) -> Vector2<f64> {
    tau.map(|v| v.clamp(-limit, limit))
}

/// Joint acceleration of the true plant and the wrench that produced it.
pub fn forward_dynamics(
    config: &PlantConfig,
    state: &JointState,
    tau_cmd: &Vector2<f64>,
    hand_force: Option<Vector2<f64>>,
    t: f64,
) -> (Vector2<f64>, ExternalWrench) {
    let model = &config.true_model;
    let (q, qd) = (&state.q, &state.qdot);
    let j = kin2::jacobian(model, q);
    let x = kin2::forward_kinematics(model, q);
    let xdot = j * qd;
    let wrench = environment_wrench(config, &x, &xdot, t, hand_force);

    let mut rhs = tau_cmd + j.transpose() * wrench.force
        - coriolis_matrix(model, q, qd) * qd
        - friction_torque(model, qd)
        - limit_torque(model, &config.limit_spring, state);
    if config.payload_mass > 0.0 {
        rhs -= j.transpose() * (kin2::jacobian_dot(model, q, qd) * qd) * config.payload_mass;
    }
    let m = augmented_inertia(config, q);
    let qdd = solve_spd(&m, &rhs);
    (qdd, wrench)
}

fn solve_spd(m: &Matrix2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
    // Explicit 2×2 inverse; M is SPD so det > 0 for physical parameters.
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Vector2::new(
        (m[(1, 1)] * b[0] - m[(0, 1)] * b[1]) / det,
        (m[(0, 0)] * b[1] - m[(1, 0)] * b[0]) / det,
    )
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub state: JointState,
    /// Wrench at the start of the step.
    pub wrench: ExternalWrench,
    /// Torque actually applied after saturation.
    pub tau_applied: Vector2<f64>,
}

/// Advance the plant by one `dt`, holding torque and hand force constant.
pub fn step(
    state: &JointState,
    tau_cmd: &Vector2<f64>,
    config: &PlantConfig,
    hand_force: Option<Vector2<f64>>,
    t: f64,
) -> Result<StepOutput, PlantError> {
    let dt = config.integrator.dt;
    let tau = saturate(tau_cmd, config.torque_limit);
    let (next, wrench) = match config.integrator.method {
        IntegrationMethod::SemiImplicitEuler => {
            let (qdd, wrench) = forward_dynamics(config, state, &tau, hand_force, t);
            let qdot = state.qdot + qdd * dt;
            let q = state.q + qdot * dt;
            (JointState { q, qdot }, wrench)
        }
        IntegrationMethod::Rk4 => {
            let f = |s: &JointState, t: f64| forward_dynamics(config, s, &tau, hand_force, t);
            let along = |s: &JointState, dq: &Vector2<f64>, dqd: &Vector2<f64>, h: f64| JointState {
                q: s.q + dq * h,
                qdot: s.qdot + dqd * h,
            };
            let (a1, wrench) = f(state, t);
            let v1 = state.qdot;
            let s2 = along(state, &v1, &a1, dt / 2.0);
            let (a2, _) = f(&s2, t + dt / 2.0);
            let v2 = s2.qdot;
            let s3 = along(state, &v2, &a2, dt / 2.0);
            let (a3, _) = f(&s3, t + dt / 2.0);
            let v3 = s3.qdot;
            let s4 = along(state, &v3, &a3, dt);
            let (a4, _) = f(&s4, t + dt);
            let v4 = s4.qdot;
            let q = state.q + (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
            let qdot = state.qdot + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
            (JointState { q, qdot }, wrench)
        }
    };
    if !next.is_finite() {
        return Err(PlantError::NumericalDivergence { t: t + dt });
    }
    Ok(StepOutput {
        state: next,
        wrench,
        tau_applied: tau,
    })
}

/// A plant instance: configuration, state and simulated time.
#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    state: JointState,
    t: f64,
}

impl Plant {
    pub fn new(config: PlantConfig, initial: JointState) -> Result<Self, PlantError> {
        config.validate()?;
        Ok(Plant {
            config,
            state: initial,
            t: 0.0,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut PlantConfig {
        &mut self.config
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn ee_position(&self) -> Vector2<f64> {
        kin2::forward_kinematics(&self.config.true_model, &self.state.q)
    }

    pub fn ee_velocity(&self) -> Vector2<f64> {
        kin2::ee_velocity(&self.config.true_model, &self.state)
    }

    pub fn step(&mut self, tau_cmd: &Vector2<f64>, hand_force: Option<Vector2<f64>>) -> Result<StepOutput, PlantError> {
        let out = step(&self.state, tau_cmd, &self.config, hand_force, self.t)?;
        self.state = out.state;
        self.t += self.config.integrator.dt;
        Ok(out)
    }
}
