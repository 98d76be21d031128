//! The chapters of `book/` as doc modules, so `cargo test` runs every
//! example in the guide.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/kinematics.md")]
pub mod kinematics {}

#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}

#[doc = include_str!("../../../book/src/impedance.md")]
pub mod impedance {}

#[doc = include_str!("../../../book/src/observer.md")]
pub mod observer {}

#[doc = include_str!("../../../book/src/teleoperation.md")]
pub mod teleoperation {}

#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/gateway.md")]
pub mod gateway {}
