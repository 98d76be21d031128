//! The tick thread. It owns the service and the hub; everything else talks
//! to it through a mailbox that is drained between ticks.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use telerehab_core::error::HarnessError;
use telerehab_core::harness::ExperimentConfig;
use tokio::sync::{oneshot, watch};

use crate::hub::{Hub, Subscription};
use crate::protocol::{Command, HandInput, StateTag};
use crate::service::{CommandError, Reply, SessionService};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// One tick per control period of wall time.
    RealTime,
    /// As fast as the simulation runs.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayConfig {
    pub pacing: Pacing,
    /// Stop each run after this many ticks.
    pub max_ticks: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            pacing: Pacing::RealTime,
            max_ticks: None,
        }
    }
}

/// A real-time loop that falls further behind than this stops catching up.
const MAX_LAG: Duration = Duration::from_millis(50);

type Responder<T> = oneshot::Sender<Result<T, CommandError>>;

enum Request {
    Command(Command, Responder<Reply>),
    Input(HandInput, Responder<nalgebra::Vector2<f64>>),
    Subscribe { decimation: u64, buffer: usize, reply: Responder<Subscription> },
    Shutdown,
}

/// Cloneable access to a running gateway.
#[derive(Debug, Clone)]
pub struct GatewayHandle {
    tx: mpsc::Sender<Request>,
    state: watch::Receiver<StateTag>,
}

impl std::fmt::Debug for Request {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Request::Command(c, _) => write!(f, "Command({c:?})"),
            Request::Input(i, _) => write!(f, "Input({i:?})"),
            Request::Subscribe { decimation, buffer, .. } => write!(f, "Subscribe({decimation}, {buffer})"),
            Request::Shutdown => f.write_str("Shutdown"),
        }
    }
}

impl GatewayHandle {
    async fn ask<T>(&self, make: impl FnOnce(Responder<T>) -> Request) -> Result<T, CommandError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).map_err(|_| CommandError::UnknownSession)?;
        rx.await.map_err(|_| CommandError::UnknownSession)?
    }

    /// Applied at the next tick boundary.
    pub async fn command(&self, cmd: Command) -> Result<Reply, CommandError> {
        self.ask(|r| Request::Command(cmd, r)).await
    }

    /// Live drag input; resolves to the clamped target.
    pub async fn input(&self, input: HandInput) -> Result<nalgebra::Vector2<f64>, CommandError> {
        self.ask(|r| Request::Input(input, r)).await
    }

    /// Telemetry from the next tick on. The stream ends when the run stops.
    pub async fn subscribe(&self, decimation: u64, buffer: usize) -> Result<Subscription, CommandError> {
        self.ask(|reply| Request::Subscribe { decimation, buffer, reply }).await
    }

    pub fn state(&self) -> StateTag {
        *self.state.borrow()
    }

    /// Latest-wins view of the state tag.
    pub fn state_changes(&self) -> watch::Receiver<StateTag> {
        self.state.clone()
    }
}

/// Owner of the tick thread; dropping it shuts the loop down.
#[derive(Debug)]
pub struct Gateway {
    handle: GatewayHandle,
    thread: Option<thread::JoinHandle<()>>,
}

impl Gateway {
    pub fn spawn(cfg: ExperimentConfig, gw: GatewayConfig) -> Result<Self, HarnessError> {
        let service = SessionService::new(cfg)?;
        let (tx, rx) = mpsc::channel();
        let (state_tx, state) = watch::channel(service.state());
        let thread = thread::Builder::new()
            .name("telerehab-tick".into())
            .spawn(move || TickLoop { service, hub: Hub::new(), gw, state_tx }.run(rx))?;
        Ok(Gateway {
            handle: GatewayHandle { tx, state },
            thread: Some(thread),
        })
    }

    pub fn handle(&self) -> GatewayHandle {
        self.handle.clone()
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        let _ = self.handle.tx.send(Request::Shutdown);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

struct TickLoop {
    service: SessionService,
    hub: Hub,
    gw: GatewayConfig,
    state_tx: watch::Sender<StateTag>,
}

impl TickLoop {
    fn run(mut self, rx: mpsc::Receiver<Request>) {
        let period = Duration::from_secs_f64(self.service.dt());
        let mut deadline = Instant::now();
        let mut ticks = 0u64;
        loop {
            // Idle loops sleep on the mailbox; running loops only peek.
            loop {
                let req = if self.service.is_running() {
                    match rx.try_recv() {
                        Ok(r) => r,
                        Err(mpsc::TryRecvError::Empty) => break,
                        Err(mpsc::TryRecvError::Disconnected) => return,
                    }
                } else {
                    match rx.recv() {
                        Ok(r) => r,
                        Err(_) => return,
                    }
                };
                let was_running = self.service.is_running();
                if !self.apply(req) {
                    return;
                }
                if self.service.is_running() && !was_running {
                    deadline = Instant::now();
                    ticks = 0;
                }
                self.publish_state();
            }

            match self.service.step() {
                Ok(Some(frame)) => self.hub.publish(&frame, &self.service.context()),
                Ok(None) => {}
                Err(e) => tracing::error!("session stopped: {e}"),
            }
            ticks += 1;
            if self.gw.max_ticks.is_some_and(|m| ticks >= m) {
                self.service.stop();
            }
            self.publish_state();

            if self.gw.pacing == Pacing::RealTime && self.service.is_running() {
                deadline += period;
                let now = Instant::now();
                if deadline > now {
                    thread::sleep(deadline - now);
                } else if now - deadline > MAX_LAG {
                    deadline = now;
                }
            }
        }
    }

    /// False on shutdown.
    fn apply(&mut self, req: Request) -> bool {
        match req {
            Request::Command(cmd, reply) => {
                let _ = reply.send(self.service.handle(&cmd));
            }
            Request::Input(input, reply) => {
                let _ = reply.send(self.service.input(input));
            }
            Request::Subscribe { decimation, buffer, reply } => {
                let _ = reply.send(self.hub.subscribe(decimation, buffer));
            }
            Request::Shutdown => return false,
        }
        true
    }

    fn publish_state(&mut self) {
        let state = self.service.state();
        let previous = *self.state_tx.borrow();
        if previous != state {
            self.state_tx.send_replace(state);
        }
        // Streams end after the new state is visible.
        if previous.is_running() && !state.is_running() {
            self.hub.close();
        }
    }
}
