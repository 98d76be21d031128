//! Task-space impedance control and the nonlinear disturbance observer.
//!
//! All laws use the *estimated* model. The observer lumps model error,
//! friction and external torques into one joint-space estimate `τ_NDOB`, which
//! is subtracted from the impedance command in tracking modes.
//!
//! The three controller forms are one formula at different operating points:
//!
//! * trajectory tracking: [`impedance_torque`] with a full reference,
//! * set-point regulation: the same with `ẋ_d = ẍ_d = 0` (a task-space PD),
//! * pHRI: additionally `x_d = x`, leaving pure damping ([`phri_torque`]).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::kin2::{self, CartesianState, JointState, RobotModel};
use crate::plant::{self, coriolis_matrix, inertia_matrix};

/// Below this `|det J|` the Jacobian is treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-8;

/// Observer inertia condition numbers above this are rejected.
pub const MAX_OBSERVER_CONDITION: f64 = 1e12;

/// Task-space stiffness (N/m) and damping (N·s/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    pub stiffness: Matrix2<f64>,
    pub damping: Matrix2<f64>,
}

impl ImpedanceGains {
    /// `K = k I`, `D = 2√k I`.
    pub fn critically_damped(k: f64) -> Self {
        ImpedanceGains {
            stiffness: Matrix2::identity() * k,
            damping: Matrix2::identity() * (2.0 * k.sqrt()),
        }
    }

    pub fn master_default() -> Self {
        Self::critically_damped(30.0)
    }

    pub fn second_default() -> Self {
        Self::critically_damped(20.0)
    }

    pub fn validate(&self, tracking: bool) -> Result<(), ControlError> {
        let psd = |m: &Matrix2<f64>, strict: bool| {
            let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0);
            let eig = m.symmetric_eigenvalues();
            sym && if strict { eig.min() > 0.0 } else { eig.min() >= 0.0 }
        };
        if !psd(&self.stiffness, tracking) {
            return Err(ControlError::InvalidConfig(
                "stiffness must be symmetric positive (semi-)definite".into(),
            ));
        }
        if !psd(&self.damping, false) {
            return Err(ControlError::InvalidConfig(
                "damping must be symmetric positive semi-definite".into(),
            ));
        }
        Ok(())
    }
}

/// Inertia the observer assumes for the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "matrix")]
pub enum ObserverInertia {
    /// The estimated inertia at the current configuration, recomputed every step.
    Estimated,
    /// A constant symmetric positive-definite matrix.
    Constant(Matrix2<f64>),
}

/// How the observer's auxiliary state is advanced over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserverDiscretization {
    /// Exact solution of the linear auxiliary dynamics for inputs held over
    /// the period. Preserves the continuous decay rate `e^{-L t}`.
    ZeroOrderHold,
    /// `z += dt ż`.
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdobConfig {
    /// Constant invertible design matrix `Y`.
    pub gain: Matrix2<f64>,
    pub inertia: ObserverInertia,
    pub discretization: ObserverDiscretization,
}

impl NdobConfig {
    pub fn master_default() -> Self {
        NdobConfig {
            gain: Matrix2::identity() * 1.92,
            inertia: ObserverInertia::Estimated,
            discretization: ObserverDiscretization::ZeroOrderHold,
        }
    }

    pub fn second_default() -> Self {
        NdobConfig {
            gain: Matrix2::identity() * 0.048,
            inertia: ObserverInertia::Constant(Matrix2::identity() * 0.001),
            discretization: ObserverDiscretization::ZeroOrderHold,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.gain.try_inverse().is_none() || self.gain.determinant().abs() < f64::EPSILON {
            return Err(ControlError::InvalidConfig("observer gain Y must be invertible".into()));
        }
        if let ObserverInertia::Constant(m) = &self.inertia {
            let sym = (m - m.transpose()).abs().max() <= 1e-15;
            if !sym || m.symmetric_eigenvalues().min() <= 0.0 {
                return Err(ControlError::InvalidConfig(
                    "constant observer inertia must be symmetric positive definite".into(),
                ));
            }
        }
        Ok(())
    }

    fn observer_inertia(&self, est_model: &RobotModel, q: &Vector2<f64>) -> Matrix2<f64> {
        match &self.inertia {
            ObserverInertia::Estimated => inertia_matrix(est_model, q),
            ObserverInertia::Constant(m) => *m,
        }
    }

    /// Observer gain `L = Y M_obs⁻¹` at configuration `q`.
    pub fn observer_gain(&self, est_model: &RobotModel, q: &Vector2<f64>) -> Result<Matrix2<f64>, ControlError> {
        let m = self.observer_inertia(est_model, q);
        let cond = kin2::condition_number(&m);
        if !(cond <= MAX_OBSERVER_CONDITION) {
            return Err(ControlError::IllConditionedObserver { cond });
        }
        let inv = m
            .try_inverse()
            .ok_or(ControlError::IllConditionedObserver { cond: f64::INFINITY })?;
        Ok(self.gain * inv)
    }
}

/// Auxiliary variable `z` and the latest disturbance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdobState {
    pub z: Vector2<f64>,
    pub estimate: Vector2<f64>,
}

impl NdobState {
    /// `z = -p(q̇)`, so the initial estimate is zero.
    pub fn new(cfg: &NdobConfig, qdot: &Vector2<f64>) -> Self {
        NdobState {
            z: -(cfg.gain * qdot),
            estimate: Vector2::zeros(),
        }
    }
}

/// One observer period.
///
/// `state` is the state at the start of the period, `tau_applied` the torque
/// the plant actually received over it (after saturation) and `next_qdot` the
/// velocity at its end. Returns the new state and `τ_NDOB = z + p(q̇')`.
///
/// Written in terms of the estimate, the observer is `d/dt τ̂ = L (τ_d - τ̂)`
/// with the measured lumped torque
/// `τ_d = M_obs (q̇' - q̇)/dt + Ŝ q̇ - τ`. For the explicit-Euler option this is
/// algebraically the textbook `z` recursion.
pub fn ndob_update(
    cfg: &NdobConfig,
    st: &NdobState,
    est_model: &RobotModel,
    state: &JointState,
    tau_applied: &Vector2<f64>,
    next_qdot: &Vector2<f64>,
    dt: f64,
) -> Result<(NdobState, Vector2<f64>), ControlError> {
    let l = cfg.observer_gain(est_model, &state.q)?;
    let m_obs = cfg.observer_inertia(est_model, &state.q);
    // Gravity is zero for the horizontal-plane robot.
    let measured = m_obs * (next_qdot - state.qdot) / dt
        + coriolis_matrix(est_model, &state.q, &state.qdot) * state.qdot
        - tau_applied;
    let blend = match cfg.discretization {
        ObserverDiscretization::ExplicitEuler => l * dt,
        ObserverDiscretization::ZeroOrderHold => Matrix2::identity() - (-l * dt).exp(),
    };
    let estimate = st.estimate + blend * (measured - st.estimate);
    let z = estimate - cfg.gain * next_qdot;
    Ok((NdobState { z, estimate }, estimate))
}

fn checked_inverse(j: &Matrix2<f64>) -> Result<Matrix2<f64>, ControlError> {
    let det = j.determinant();
    if !(det.abs() >= SINGULARITY_THRESHOLD) {
        return Err(ControlError::SingularConfiguration { det });
    }
    Ok(Matrix2::new(j[(1, 1)], -j[(0, 1)], -j[(1, 0)], j[(0, 0)]) / det)
}

/// Impedance control torque for a full Cartesian reference.
pub fn impedance_torque(
    est_model: &RobotModel,
    gains: &ImpedanceGains,
    state: &JointState,
    desired: &CartesianState,
) -> Result<Vector2<f64>, ControlError> {
    let xdd_d = desired.xddot.ok_or(ControlError::MissingDerivatives)?;
    let (q, qd) = (&state.q, &state.qdot);
    let j = kin2::jacobian(est_model, q);
    let j_inv = checked_inverse(&j)?;
    let j_dot = kin2::jacobian_dot(est_model, q, qd);
    let x = kin2::forward_kinematics(est_model, q);
    let xdot = j * qd;

    let m = inertia_matrix(est_model, q);
    let s = coriolis_matrix(est_model, q, qd);
    let qd_ref = j_inv * desired.xdot;
    let feedforward = m * (j_inv * (xdd_d - j_dot * qd_ref)) + s * qd_ref;
    let wrench = gains.damping * (desired.xdot - xdot) + gains.stiffness * (desired.x - x);
    Ok(feedforward + j.transpose() * wrench)
}

/// The set-point form: `Jᵀ[K(x_d - x) - D ẋ]`.
pub fn setpoint_torque(
    est_model: &RobotModel,
    gains: &ImpedanceGains,
    state: &JointState,
    x_d: &Vector2<f64>,
) -> Vector2<f64> {
    let j = kin2::jacobian(est_model, &state.q);
    let x = kin2::forward_kinematics(est_model, &state.q);
    let xdot = j * state.qdot;
    j.transpose() * (gains.stiffness * (x_d - x) - gains.damping * xdot)
}

/// pHRI law: end-effector damping plus optional rendered feedback.
pub fn phri_torque(
    est_model: &RobotModel,
    gains: &ImpedanceGains,
    state: &JointState,
    tau_ff: &Vector2<f64>,
) -> Vector2<f64> {
    let j = kin2::jacobian(est_model, &state.q);
    -(j.transpose() * (gains.damping * (j * state.qdot))) + tau_ff
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Tracking,
    Setpoint,
    Phri,
}

/// Operating mode of one robot's controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMode {
    pub kind: ModeKind,
    pub ndob_enabled: bool,
    /// Only meaningful on the master in pHRI.
    pub feedback_enabled: bool,
}

impl ControlMode {
    pub fn tracking(ndob: bool) -> Self {
        ControlMode {
            kind: ModeKind::Tracking,
            ndob_enabled: ndob,
            feedback_enabled: false,
        }
    }

    /// pHRI on the master. The observer would resist the operator, so it is
    /// always switched off here.
    pub fn phri(feedback: bool) -> Self {
        ControlMode {
            kind: ModeKind::Phri,
            ndob_enabled: false,
            feedback_enabled: feedback,
        }
    }

    pub fn is_consistent(&self) -> bool {
        !(self.kind == ModeKind::Phri && self.ndob_enabled)
    }
}

/// Combine the control terms for the given mode and saturate the result.
pub fn compose_command(
    mode: &ControlMode,
    tau_imp: &Vector2<f64>,
    tau_ndob: &Vector2<f64>,
    tau_ff: &Vector2<f64>,
    torque_limit: f64,
) -> Vector2<f64> {
    let mut tau = *tau_imp;
    if mode.ndob_enabled {
        tau -= tau_ndob;
    }
    if mode.kind == ModeKind::Phri && mode.feedback_enabled {
        tau += tau_ff;
    }
    plant::saturate(&tau, torque_limit)
}

/// Cartesian inertia `M_x = J⁻ᵀ M J⁻¹` and Coriolis `S_x = J⁻ᵀ S J⁻¹ - M_x J̇ J⁻¹`.
pub fn cartesian_dynamics(
    est_model: &RobotModel,
    state: &JointState,
) -> Result<(Matrix2<f64>, Matrix2<f64>), ControlError> {
    let (q, qd) = (&state.q, &state.qdot);
    let j_inv = checked_inverse(&kin2::jacobian(est_model, q))?;
    let j_inv_t = j_inv.transpose();
    let mx = j_inv_t * inertia_matrix(est_model, q) * j_inv;
    let sx = j_inv_t * coriolis_matrix(est_model, q, qd) * j_inv - mx * kin2::jacobian_dot(est_model, q, qd) * j_inv;
    Ok((mx, sx))
}

/// Torques produced by one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    /// Saturated command sent to the plant.
    pub tau_cmd: Vector2<f64>,
    pub tau_imp: Vector2<f64>,
    pub tau_ndob: Vector2<f64>,
}

/// Controller and observer of one robot.
#[derive(Debug, Clone)]
pub struct RobotController {
    pub est_model: RobotModel,
    pub gains: ImpedanceGains,
    pub ndob: NdobConfig,
    pub torque_limit: f64,
    /// Keep the damping term of the pHRI law.
    pub phri_damping: bool,
    mode: ControlMode,
    observer: Option<NdobState>,
}

impl RobotController {
    pub fn new(
        est_model: RobotModel,
        gains: ImpedanceGains,
        ndob: NdobConfig,
        mode: ControlMode,
        torque_limit: f64,
    ) -> Result<Self, ControlError> {
        gains.validate(mode.kind != ModeKind::Phri)?;
        ndob.validate()?;
        if !mode.is_consistent() {
            return Err(ControlError::InvalidConfig("pHRI requires the observer to be off".into()));
        }
        Ok(RobotController {
            est_model,
            gains,
            ndob,
            torque_limit,
            phri_damping: true,
            mode,
            observer: None,
        })
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    /// Switch modes; entering pHRI forces the observer off, and re-enabling
    /// the observer restarts it from a zero estimate.
    pub fn set_mode(&mut self, mut mode: ControlMode) {
        if mode.kind == ModeKind::Phri {
            mode.ndob_enabled = false;
        }
        if !mode.ndob_enabled {
            self.observer = None;
        }
        self.mode = mode;
    }

    pub fn observer_state(&self) -> Option<&NdobState> {
        self.observer.as_ref()
    }

    pub fn disturbance_estimate(&self) -> Vector2<f64> {
        self.observer.map(|o| o.estimate).unwrap_or_else(Vector2::zeros)
    }

    /// Command for the current state. `desired` is ignored in pHRI.
    pub fn compute(
        &mut self,
        state: &JointState,
        desired: &CartesianState,
        tau_ff: &Vector2<f64>,
    ) -> Result<ControlOutput, ControlError> {
        if self.mode.ndob_enabled && self.observer.is_none() {
            self.observer = Some(NdobState::new(&self.ndob, &state.qdot));
        }
        let tau_imp = match self.mode.kind {
            ModeKind::Tracking => impedance_torque(&self.est_model, &self.gains, state, desired)?,
            ModeKind::Setpoint => {
                let hold = CartesianState::hold(desired.x);
                impedance_torque(&self.est_model, &self.gains, state, &hold)?
            }
            ModeKind::Phri => {
                if self.phri_damping {
                    phri_torque(&self.est_model, &self.gains, state, &Vector2::zeros())
                } else {
                    Vector2::zeros()
                }
            }
        };
        let tau_ndob = if self.mode.ndob_enabled {
            self.disturbance_estimate()
        } else {
            Vector2::zeros()
        };
        let tau_cmd = compose_command(&self.mode, &tau_imp, &tau_ndob, tau_ff, self.torque_limit);
        Ok(ControlOutput {
            tau_cmd,
            tau_imp,
            tau_ndob,
        })
    }

    /// Advance the observer over the period that just ran.
    pub fn observe(
        &mut self,
        state: &JointState,
        tau_applied: &Vector2<f64>,
        next_qdot: &Vector2<f64>,
        dt: f64,
    ) -> Result<(), ControlError> {
        if let Some(st) = self.observer {
            let (next, _) = ndob_update(&self.ndob, &st, &self.est_model, state, tau_applied, next_qdot, dt)?;
            self.observer = Some(next);
        }
        Ok(())
    }
}
