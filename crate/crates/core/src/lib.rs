//! Deterministic simulator for bilateral teleoperation of two planar 2-DOF
//! rehabilitation robots under impedance control with a nonlinear
//! disturbance observer (NDOB).
//!
//! * [`kin2`]: kinematics, joint limits and workspaces.
//! * [`plant`]: rigid-body dynamics, contact and payload, integration.
//! * [`control`]: impedance laws and the observer.
//! * [`traj`]: reference patterns and recorded demonstrations.
//! * [`link`]: the two-robot session and its position exchange.
//! * [`harness`]: experiment presets, metrics and CSV output.
//!
//! ```
//! use telerehab_core::kin2::{forward_kinematics, inverse_kinematics, RobotModel};
//! use nalgebra::Vector2;
//!
//! let black = RobotModel::master_black();
//! let q = inverse_kinematics(&black, &Vector2::new(0.3, 0.05)).unwrap();
//! let x = forward_kinematics(&black, &q);
//! assert!((x - Vector2::new(0.3, 0.05)).norm() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} = {a} differs from {} = {b} by more than {tol}", stringify!($a), stringify!($b));
    }};
}

pub mod control;
pub mod error;
pub mod harness;
pub mod kin2;
pub mod link;
pub mod plant;
pub mod traj;

pub use error::{ControlError, HarnessError, KinematicsError, LinkError, PlantError, SessionError, TrajectoryError};
