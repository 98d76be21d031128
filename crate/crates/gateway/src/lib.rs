//! Session service bridging the simulator to an operator console.
//!
//! A dedicated thread owns the simulation and ticks it; commands, drag input
//! and subscriptions reach it through a mailbox and take effect between
//! ticks. Telemetry leaves through per-subscriber latest-wins buffers, so no
//! client can slow the control loop down.

pub mod hub;
pub mod protocol;
pub mod runtime;
pub mod server;
pub mod service;

pub use hub::{Hub, StreamEnded, Subscription, DEFAULT_DECIMATION};
pub use protocol::{Ack, ClientMessage, Command, HandInput, ModeName, ServerMessage, StateTag, TelemetryEnvelope};
pub use runtime::{Gateway, GatewayConfig, GatewayHandle, Pacing};
pub use server::{router, serve};
pub use service::{CommandError, Reply, SessionService};
