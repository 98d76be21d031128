//! The bilateral session: two robots, the position exchange between them,
//! the master-to-second workspace mapping and virtual-spring force feedback.
//!
//! A [`Session`] is a single-driver tick loop. Every tick runs, in order:
//! master reference, master control and plant step, send `x_M`, second
//! reference from the latest received `x_M`, second control and plant step,
//! send `x_S`, and finally feedback rendering from the latest received `x_S`
//! (applied to the master on the next tick).

use std::fmt;
use std::net::{SocketAddr, UdpSocket};
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ControlMode, RobotController};
use crate::error::{LinkError, SessionError};
use crate::kin2::{self, CartesianState, JointState};
use crate::plant::{Plant, PlantConfig};
use crate::traj::{DemoPlayer, Differentiator, RecordedDemo, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotRole {
    Master,
    Second,
}

impl RobotRole {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotRole::Master => "master",
            RobotRole::Second => "second",
        }
    }
}

impl fmt::Display for RobotRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One end-effector position sample on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    /// The sender: master packets travel master→second.
    pub from: RobotRole,
    pub seq: u64,
    pub send_tick: u64,
    pub payload: Vector2<f64>,
}

impl Packet {
    pub const MAGIC: [u8; 4] = *b"TRS1";
    /// Magic, direction, one reserved zero byte, seq, send tick, x, y.
    pub const WIRE_SIZE: usize = 38;

    /// Little-endian wire encoding.
    pub fn encode(&self) -> [u8; Self::WIRE_SIZE] {
        let mut b = [0u8; Self::WIRE_SIZE];
        b[0..4].copy_from_slice(&Self::MAGIC);
        b[4] = match self.from {
            RobotRole::Master => 0,
            RobotRole::Second => 1,
        };
        b[6..14].copy_from_slice(&self.seq.to_le_bytes());
        b[14..22].copy_from_slice(&self.send_tick.to_le_bytes());
        b[22..30].copy_from_slice(&self.payload[0].to_le_bytes());
        b[30..38].copy_from_slice(&self.payload[1].to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, LinkError> {
        if b.len() != Self::WIRE_SIZE {
            return Err(LinkError::Malformed("wrong length"));
        }
        if b[0..4] != Self::MAGIC {
            return Err(LinkError::Malformed("bad magic"));
        }
        let from = match b[4] {
            0 => RobotRole::Master,
            1 => RobotRole::Second,
            _ => return Err(LinkError::Malformed("bad direction")),
        };
        if b[5] != 0 {
            return Err(LinkError::Malformed("reserved byte set"));
        }
        let u = |r: std::ops::Range<usize>| u64::from_le_bytes(b[r].try_into().unwrap());
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(b[r].try_into().unwrap());
        let payload = Vector2::new(f(22..30), f(30..38));
        if !payload.iter().all(|v| v.is_finite()) {
            return Err(LinkError::Malformed("non-finite payload"));
        }
        Ok(Packet {
            from,
            seq: u(6..14),
            send_tick: u(14..22),
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TransportKind {
    /// Deterministic in-process queue.
    InProcess,
    /// Real sockets; each robot binds its own address.
    Udp { master: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub rate: f64,
    pub delay_ticks: u64,
    pub jitter_ticks: u64,
    pub drop_probability: f64,
    pub seed: u64,
    pub transport: TransportKind,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            rate: 1000.0,
            delay_ticks: 0,
            jitter_ticks: 0,
            drop_probability: 0.0,
            seed: 0,
            transport: TransportKind::InProcess,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rate > 0.0) {
            return Err("channel rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err("drop probability must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// One direction of the position exchange.
pub trait Transport: fmt::Debug + Send {
    fn send(&mut self, packet: Packet) -> Result<(), LinkError>;
    /// Packets that have arrived by `now_tick`, oldest first, with any packet
    /// older than one already delivered discarded.
    fn poll(&mut self, now_tick: u64) -> Result<Vec<Packet>, LinkError>;
}

/// Simulated link with fixed delay, uniform jitter and Bernoulli drops.
#[derive(Debug, Clone)]
pub struct Channel {
    delay_ticks: u64,
    jitter_ticks: u64,
    drop_probability: f64,
    rng: ChaCha8Rng,
    in_flight: Vec<(u64, Packet)>,
    last_seq: Option<u64>,
}

impl Channel {
    /// `stream` separates the random sequences of the two directions.
    pub fn new(cfg: &ChannelConfig, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Channel {
            delay_ticks: cfg.delay_ticks,
            jitter_ticks: cfg.jitter_ticks,
            drop_probability: cfg.drop_probability,
            rng,
            in_flight: Vec::new(),
            last_seq: None,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

impl Transport for Channel {
    fn send(&mut self, packet: Packet) -> Result<(), LinkError> {
        // Draw both numbers every time so the sequence depends only on the
        // number of packets sent.
        let dropped = self.rng.random::<f64>() < self.drop_probability;
        let jitter = self.rng.random_range(0..=self.jitter_ticks);
        if !dropped {
            self.in_flight
                .push((packet.send_tick + self.delay_ticks + jitter, packet));
        }
        Ok(())
    }

    fn poll(&mut self, now_tick: u64) -> Result<Vec<Packet>, LinkError> {
        let mut due: Vec<(u64, Packet)> = Vec::new();
        self.in_flight.retain(|(at, p)| {
            if *at <= now_tick {
                due.push((*at, *p));
                false
            } else {
                true
            }
        });
        due.sort_by_key(|(at, p)| (*at, p.seq));
        let mut out = Vec::with_capacity(due.len());
        for (_, p) in due {
            if self.last_seq.is_none_or(|last| p.seq > last) {
                self.last_seq = Some(p.seq);
                out.push(p);
            }
        }
        Ok(out)
    }
}

/// One direction over real UDP sockets: the sender's socket writes to the
/// receiver's address; the receiver's socket is read without blocking.
#[derive(Debug)]
pub struct UdpPipe {
    tx: UdpSocket,
    peer: SocketAddr,
    rx: UdpSocket,
    expect_from: RobotRole,
    last_seq: Option<u64>,
}

impl UdpPipe {
    pub fn new(tx: UdpSocket, rx: UdpSocket, expect_from: RobotRole) -> Result<Self, LinkError> {
        rx.set_nonblocking(true)?;
        let peer = rx.local_addr()?;
        Ok(UdpPipe {
            tx,
            peer,
            rx,
            expect_from,
            last_seq: None,
        })
    }

    /// Both directions between sockets bound to the two addresses.
    pub fn pair(master_addr: &str, second_addr: &str) -> Result<(UdpPipe, UdpPipe), LinkError> {
        let master = UdpSocket::bind(master_addr)?;
        let second = UdpSocket::bind(second_addr)?;
        let m2s = UdpPipe::new(master.try_clone()?, second.try_clone()?, RobotRole::Master)?;
        let s2m = UdpPipe::new(second, master, RobotRole::Second)?;
        Ok((m2s, s2m))
    }
}

impl Transport for UdpPipe {
    fn send(&mut self, packet: Packet) -> Result<(), LinkError> {
        self.tx.send_to(&packet.encode(), self.peer)?;
        Ok(())
    }

    fn poll(&mut self, _now_tick: u64) -> Result<Vec<Packet>, LinkError> {
        let mut out = Vec::new();
        let mut buf = [0u8; 64];
        loop {
            match self.rx.recv_from(&mut buf) {
                Ok((n, _)) => {
                    // Stray datagrams are ignored, as UDP would.
                    let Ok(p) = Packet::decode(&buf[..n]) else { continue };
                    if p.from == self.expect_from && self.last_seq.is_none_or(|last| p.seq > last) {
                        self.last_seq = Some(p.seq);
                        out.push(p);
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => return Ok(out),
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Virtual spring between the two end-effectors, rendered on the master.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// `K_ff`, N/m.
    pub stiffness: Matrix2<f64>,
    /// Per-component saturation, N.
    pub force_clip: f64,
}

impl Default for FeedbackConfig {
    /// 200 N/m keeps the payload drag stable under the second robot's
    /// low-inertia observer; stiffer springs oscillate with the payload on.
    fn default() -> Self {
        FeedbackConfig {
            stiffness: Matrix2::identity() * 200.0,
            force_clip: 10.0,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), String> {
        let k = &self.stiffness;
        if k != &k.transpose() || k.symmetric_eigenvalues().min() < 0.0 {
            return Err("feedback stiffness must be symmetric positive semi-definite".into());
        }
        if !(self.force_clip > 0.0) {
            return Err("force clip must be positive".into());
        }
        Ok(())
    }
}

/// `K_ff (x_S - x_M)` before clipping.
pub fn spring_force(fb: &FeedbackConfig, x_s: &Vector2<f64>, x_m: &Vector2<f64>) -> Vector2<f64> {
    fb.stiffness * (x_s - x_m)
}

/// Feedback force (clipped) and the master joint torque `J_Mᵀ F_ff`.
///
/// `x_s` must already be expressed in the master's frame (see [`unmap`]).
pub fn render_force_feedback(
    fb: &FeedbackConfig,
    x_s: &Vector2<f64>,
    x_m: &Vector2<f64>,
    j_master: &Matrix2<f64>,
) -> (Vector2<f64>, Vector2<f64>) {
    let f = spring_force(fb, x_s, x_m).map(|v| v.clamp(-fb.force_clip, fb.force_clip));
    (f, j_master.transpose() * f)
}

/// Master position to the second robot's desired position.
pub fn map_master_to_second(offset: &Vector2<f64>, x_m: &Vector2<f64>) -> Vector2<f64> {
    x_m + offset
}

/// Second robot position back into the master's frame.
pub fn unmap(offset: &Vector2<f64>, x_s: &Vector2<f64>) -> Vector2<f64> {
    x_s - offset
}

/// Operator hand as a spring-damper pulling the master toward a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandModel {
    /// N/m.
    pub stiffness: f64,
    /// N·s/m.
    pub damping: f64,
}

impl Default for HandModel {
    fn default() -> Self {
        HandModel {
            stiffness: 150.0,
            damping: 10.0,
        }
    }
}

impl HandModel {
    pub fn force(&self, target: &Vector2<f64>, x: &Vector2<f64>, xdot: &Vector2<f64>) -> Vector2<f64> {
        (target - x) * self.stiffness - xdot * self.damping
    }
}

/// Where the hand is pulling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandTarget {
    /// Scripted free-form path, gripped throughout.
    Path(TrajectorySpec),
    /// Live operator input.
    Live { target: Vector2<f64>, grip: bool },
}

/// What drives the master.
#[derive(Debug, Clone)]
pub enum MasterReference {
    Trajectory(TrajectorySpec),
    Replay { demo: Arc<RecordedDemo>, player: DemoPlayer },
    Hold(Vector2<f64>),
    /// pHRI: the master follows the operator's hand.
    Hand(HandTarget),
}

impl MasterReference {
    pub fn replay(demo: Arc<RecordedDemo>, dt: f64, cutoff_hz: f64) -> Self {
        MasterReference::Replay {
            demo,
            player: DemoPlayer::new(dt, cutoff_hz),
        }
    }
}

/// Plant, controller and starting state of one robot.
#[derive(Debug, Clone)]
pub struct RobotSetup {
    pub plant: PlantConfig,
    pub controller: RobotController,
    pub initial: JointState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub offset: Vector2<f64>,
    pub feedback: FeedbackConfig,
    pub channel: ChannelConfig,
    /// Low-pass cutoff for the second robot's reference derivatives, Hz.
    pub reference_cutoff: f64,
    pub hand: HandModel,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            offset: Vector2::new(0.1, 0.0),
            feedback: FeedbackConfig::default(),
            channel: ChannelConfig::default(),
            reference_cutoff: 50.0,
            hand: HandModel::default(),
        }
    }
}

/// Per-robot slice of a telemetry frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotFrame {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
    pub x: Vector2<f64>,
    pub x_d: Vector2<f64>,
    /// Torque applied to the plant this tick.
    pub tau: Vector2<f64>,
    pub tau_ndob: Vector2<f64>,
}

/// Everything observable about one tick, taken after both plants stepped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    pub t: f64,
    pub master: RobotFrame,
    pub second: RobotFrame,
    /// Rendered feedback force, applied to the master from the next tick.
    pub f_ff: Vector2<f64>,
    pub hand_force: Vector2<f64>,
}

impl TelemetryFrame {
    pub fn robot(&self, role: RobotRole) -> &RobotFrame {
        match role {
            RobotRole::Master => &self.master,
            RobotRole::Second => &self.second,
        }
    }
}

#[derive(Debug)]
struct Robot {
    plant: Plant,
    controller: RobotController,
}

/// A running bilateral session.
#[derive(Debug)]
pub struct Session {
    cfg: SessionConfig,
    dt: f64,
    tick: u64,
    master: Robot,
    second: Robot,
    m2s: Box<dyn Transport>,
    s2m: Box<dyn Transport>,
    seq: [u64; 2],
    /// Second robot's desired position before any master packet arrives.
    second_hold: Vector2<f64>,
    latest_master: Option<Packet>,
    latest_second: Option<Packet>,
    reference_diff: Differentiator,
    reference: MasterReference,
    reference_start: u64,
    tau_ff: Vector2<f64>,
    recorder: Option<RecordedDemo>,
}

impl Session {
    pub fn new(
        cfg: SessionConfig,
        master: RobotSetup,
        second: RobotSetup,
        reference: MasterReference,
    ) -> Result<Self, SessionError> {
        let plant_err = |robot| move |source| SessionError::Plant { robot, tick: 0, source };
        let link_err = |source| SessionError::Link {
            robot: RobotRole::Master,
            tick: 0,
            source,
        };
        let dt = master.plant.dt();
        let master_plant = Plant::new(master.plant, master.initial).map_err(plant_err(RobotRole::Master))?;
        let second_plant = Plant::new(second.plant, second.initial).map_err(plant_err(RobotRole::Second))?;
        cfg.channel
            .validate()
            .and(cfg.feedback.validate())
            .map_err(|m| link_err(LinkError::TransportDown(m)))?;
        let (m2s, s2m): (Box<dyn Transport>, Box<dyn Transport>) = match &cfg.channel.transport {
            TransportKind::InProcess => (
                Box::new(Channel::new(&cfg.channel, 0)),
                Box::new(Channel::new(&cfg.channel, 1)),
            ),
            TransportKind::Udp { master, second } => {
                let (a, b) = UdpPipe::pair(master, second).map_err(link_err)?;
                (Box::new(a), Box::new(b))
            }
        };
        let second_hold = second_plant.ee_position();
        Ok(Session {
            reference_diff: Differentiator::new(dt, cfg.reference_cutoff),
            cfg,
            dt,
            tick: 0,
            master: Robot {
                plant: master_plant,
                controller: master.controller,
            },
            second: Robot {
                plant: second_plant,
                controller: second.controller,
            },
            m2s,
            s2m,
            seq: [0, 0],
            second_hold,
            latest_master: None,
            latest_second: None,
            reference,
            reference_start: 0,
            tau_ff: Vector2::zeros(),
            recorder: None,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the next tick to run.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn plant(&self, role: RobotRole) -> &Plant {
        match role {
            RobotRole::Master => &self.master.plant,
            RobotRole::Second => &self.second.plant,
        }
    }

    pub fn plant_mut(&mut self, role: RobotRole) -> &mut Plant {
        match role {
            RobotRole::Master => &mut self.master.plant,
            RobotRole::Second => &mut self.second.plant,
        }
    }

    pub fn controller(&self, role: RobotRole) -> &RobotController {
        match role {
            RobotRole::Master => &self.master.controller,
            RobotRole::Second => &self.second.controller,
        }
    }

    pub fn controller_mut(&mut self, role: RobotRole) -> &mut RobotController {
        match role {
            RobotRole::Master => &mut self.master.controller,
            RobotRole::Second => &mut self.second.controller,
        }
    }

    pub fn set_mode(&mut self, role: RobotRole, mode: ControlMode) {
        self.controller_mut(role).set_mode(mode);
    }

    pub fn reference(&self) -> &MasterReference {
        &self.reference
    }

    /// Replace the master's reference; its clock restarts at the next tick.
    pub fn set_reference(&mut self, reference: MasterReference) {
        self.reference = reference;
        self.reference_start = self.tick;
    }

    /// Update the live hand input. Ignored unless the reference is a live hand.
    pub fn set_hand_input(&mut self, target: Vector2<f64>, grip: bool) -> bool {
        match &mut self.reference {
            MasterReference::Hand(h @ HandTarget::Live { .. }) => {
                *h = HandTarget::Live { target, grip };
                true
            }
            _ => false,
        }
    }

    pub fn start_recording(&mut self, demo: RecordedDemo) {
        self.recorder = Some(demo);
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    pub fn stop_recording(&mut self) -> Option<RecordedDemo> {
        self.recorder.take()
    }

    /// Seconds since the current reference was set, for the tick about to run.
    pub fn reference_time(&self) -> f64 {
        (self.tick - self.reference_start) as f64 * self.dt
    }

    /// Replay progress in `[0, 1]`, if replaying.
    pub fn replay_progress(&self) -> Option<f64> {
        match &self.reference {
            MasterReference::Replay { demo, .. } => {
                let d = demo.duration();
                Some(if d > 0.0 { (self.reference_time() / d).min(1.0) } else { 1.0 })
            }
            _ => None,
        }
    }

    /// Master reference and hand force for this tick.
    fn master_desired(&mut self, tick: u64) -> Result<(CartesianState, Option<Vector2<f64>>), SessionError> {
        let t = self.reference_time();
        let plant = &self.master.plant;
        let x = plant.ee_position();
        Ok(match &mut self.reference {
            MasterReference::Trajectory(spec) => (spec.sample(t), None),
            MasterReference::Replay { demo, player } => {
                // Past the end the last sample is held.
                let t = t.min(demo.duration());
                let s = player.sample(demo, t).map_err(|source| SessionError::Reference {
                    robot: RobotRole::Master,
                    tick,
                    source,
                })?;
                (s, None)
            }
            MasterReference::Hold(p) => (CartesianState::hold(*p), None),
            MasterReference::Hand(target) => {
                let aim = match target {
                    HandTarget::Path(spec) => Some(spec.sample(t).x),
                    HandTarget::Live { target, grip } => grip.then_some(*target),
                };
                match aim {
                    Some(a) => (
                        CartesianState::hold(a),
                        Some(self.cfg.hand.force(&a, &x, &plant.ee_velocity())),
                    ),
                    None => (CartesianState::hold(x), None),
                }
            }
        })
    }

    /// Run one tick.
    pub fn step(&mut self) -> Result<TelemetryFrame, SessionError> {
        let tick = self.tick;
        let dt = self.dt;
        let control_err = |robot| move |source| SessionError::Control { robot, tick, source };
        let plant_err = |robot| move |source| SessionError::Plant { robot, tick, source };
        let link_err = |robot| move |source| SessionError::Link { robot, tick, source };

        let (desired_m, hand) = self.master_desired(tick)?;
        let sm = *self.master.plant.state();
        let out_m = self
            .master
            .controller
            .compute(&sm, &desired_m, &self.tau_ff)
            .map_err(control_err(RobotRole::Master))?;
        let step_m = self
            .master
            .plant
            .step(&out_m.tau_cmd, hand)
            .map_err(plant_err(RobotRole::Master))?;
        self.master
            .controller
            .observe(&sm, &step_m.tau_applied, &step_m.state.qdot, dt)
            .map_err(control_err(RobotRole::Master))?;
        let x_m = self.master.plant.ee_position();
        self.seq[0] += 1;
        self.m2s
            .send(Packet {
                from: RobotRole::Master,
                seq: self.seq[0],
                send_tick: tick,
                payload: x_m,
            })
            .map_err(link_err(RobotRole::Master))?;

        if let Some(p) = self.m2s.poll(tick).map_err(link_err(RobotRole::Second))?.pop() {
            self.latest_master = Some(p);
        }
        let x_sd = self
            .latest_master
            .map(|p| map_master_to_second(&self.cfg.offset, &p.payload))
            .unwrap_or(self.second_hold);
        let desired_s = self.reference_diff.update(x_sd);
        let ss = *self.second.plant.state();
        let out_s = self
            .second
            .controller
            .compute(&ss, &desired_s, &Vector2::zeros())
            .map_err(control_err(RobotRole::Second))?;
        let step_s = self
            .second
            .plant
            .step(&out_s.tau_cmd, None)
            .map_err(plant_err(RobotRole::Second))?;
        self.second
            .controller
            .observe(&ss, &step_s.tau_applied, &step_s.state.qdot, dt)
            .map_err(control_err(RobotRole::Second))?;
        let x_s = self.second.plant.ee_position();
        self.seq[1] += 1;
        self.s2m
            .send(Packet {
                from: RobotRole::Second,
                seq: self.seq[1],
                send_tick: tick,
                payload: x_s,
            })
            .map_err(link_err(RobotRole::Second))?;

        if let Some(p) = self.s2m.poll(tick).map_err(link_err(RobotRole::Master))?.pop() {
            self.latest_second = Some(p);
        }
        let f_ff = match self.latest_second {
            Some(p) => {
                let j = kin2::jacobian(&self.master.controller.est_model, &self.master.plant.state().q);
                let (f, tau) = render_force_feedback(&self.cfg.feedback, &unmap(&self.cfg.offset, &p.payload), &x_m, &j);
                self.tau_ff = tau;
                f
            }
            None => Vector2::zeros(),
        };

        if let Some(rec) = &mut self.recorder {
            rec.record_append(tick, x_m).map_err(|source| SessionError::Reference {
                robot: RobotRole::Master,
                tick,
                source,
            })?;
        }

        let frame = |plant: &Plant, x_d: Vector2<f64>, tau: Vector2<f64>, tau_ndob: Vector2<f64>| RobotFrame {
            q: plant.state().q,
            qdot: plant.state().qdot,
            x: plant.ee_position(),
            x_d,
            tau,
            tau_ndob,
        };
        let master_ndob = if self.master.controller.mode().ndob_enabled { out_m.tau_ndob } else { Vector2::zeros() };
        let second_ndob = if self.second.controller.mode().ndob_enabled { out_s.tau_ndob } else { Vector2::zeros() };
        let out = TelemetryFrame {
            tick,
            t: (tick + 1) as f64 * dt,
            master: frame(&self.master.plant, desired_m.x, step_m.tau_applied, master_ndob),
            second: frame(&self.second.plant, desired_s.x, step_s.tau_applied, second_ndob),
            f_ff,
            hand_force: hand.unwrap_or_else(Vector2::zeros),
        };
        self.tick += 1;
        Ok(out)
    }

    /// Run `n` ticks, handing each frame to `sink`.
    pub fn run(&mut self, n: u64, mut sink: impl FnMut(&TelemetryFrame)) -> Result<(), SessionError> {
        for _ in 0..n {
            let f = self.step()?;
            sink(&f);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(seq: u64, tick: u64) -> Packet {
        Packet {
            from: RobotRole::Master,
            seq,
            send_tick: tick,
            payload: Vector2::new(seq as f64, -(seq as f64)),
        }
    }

    #[test]
    fn wire_round_trip() {
        let p = Packet {
            from: RobotRole::Second,
            seq: 0x0102_0304_0506_0708,
            send_tick: 42,
            payload: Vector2::new(0.25, -1.5e-3),
        };
        let b = p.encode();
        assert_eq!(b.len(), 38);
        assert_eq!(&b[0..4], b"TRS1");
        assert_eq!(b[4], 1);
        assert_eq!(b[6], 0x08);
        assert_eq!(Packet::decode(&b).unwrap(), p);
    }

    #[test]
    fn wire_rejects_garbage() {
        let mut b = packet(1, 1).encode();
        assert!(Packet::decode(&b[..37]).is_err());
        b[4] = 7;
        assert_eq!(Packet::decode(&b), Err(LinkError::Malformed("bad direction")));
        let mut b = packet(1, 1).encode();
        b[0] = b'X';
        assert!(Packet::decode(&b).is_err());
        let mut b = packet(1, 1).encode();
        b[22..30].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Packet::decode(&b).is_err());
    }

    #[test]
    fn ideal_channel_is_identity() {
        let mut ch = Channel::new(&ChannelConfig::default(), 0);
        for t in 0..10 {
            ch.send(packet(t + 1, t)).unwrap();
            assert_eq!(ch.poll(t).unwrap(), vec![packet(t + 1, t)]);
        }
    }

    #[test]
    fn pure_delay() {
        let cfg = ChannelConfig {
            delay_ticks: 5,
            ..Default::default()
        };
        let mut ch = Channel::new(&cfg, 0);
        for t in 0..20 {
            ch.send(packet(t + 1, t)).unwrap();
            let got = ch.poll(t).unwrap();
            if t < 5 {
                assert!(got.is_empty());
            } else {
                assert_eq!(got, vec![packet(t - 4, t - 5)]);
            }
        }
    }

    #[test]
    fn stale_packets_discarded() {
        let mut ch = Channel::new(&ChannelConfig::default(), 0);
        ch.send(packet(2, 0)).unwrap();
        assert_eq!(ch.poll(0).unwrap().len(), 1);
        ch.send(packet(1, 1)).unwrap();
        assert!(ch.poll(1).unwrap().is_empty());
    }

    #[test]
    fn feedback_examples() {
        let fb = FeedbackConfig {
            stiffness: Matrix2::identity() * 100.0,
            force_clip: 10.0,
        };
        let j = Matrix2::new(1.0, 2.0, 3.0, 4.0);
        let x = Vector2::new(0.3, 0.1);
        let (f, tau) = render_force_feedback(&fb, &x, &x, &j);
        assert_eq!(f, Vector2::zeros());
        assert_eq!(tau, Vector2::zeros());
        let (f, _) = render_force_feedback(&fb, &Vector2::new(0.01, 0.0), &Vector2::zeros(), &j);
        assert_eq!(f, Vector2::new(1.0, 0.0));
        let (f, tau) = render_force_feedback(&fb, &Vector2::new(1.0, -1.0), &Vector2::zeros(), &j);
        assert_eq!(f, Vector2::new(10.0, -10.0));
        assert_eq!(tau, j.transpose() * f);
    }

    #[test]
    fn mapping_examples() {
        let off = Vector2::new(0.1, 0.0);
        let x = Vector2::new(0.2, -0.05);
        let y = map_master_to_second(&off, &x);
        assert_close!(y[0], 0.3, 1e-15);
        assert_eq!(y[1], -0.05);
        assert_eq!(map_master_to_second(&Vector2::zeros(), &x), x);
        assert!((unmap(&off, &y) - x).abs().max() <= 1e-15);
    }

    #[test]
    fn hand_equilibrium() {
        let h = HandModel::default();
        let x = Vector2::new(0.3, 0.0);
        assert_eq!(h.force(&x, &x, &Vector2::zeros()), Vector2::zeros());
    }
}
