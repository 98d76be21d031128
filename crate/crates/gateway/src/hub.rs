//! Telemetry fan-out. Each subscriber decimates independently and owns a
//! bounded buffer that overwrites its oldest envelope when full, so a slow
//! reader loses frames instead of holding up the tick loop.

use telerehab_core::link::TelemetryFrame;
use tokio::sync::broadcast::{self, error::RecvError, error::TryRecvError};

use crate::protocol::{FrameContext, TelemetryEnvelope};
use crate::service::CommandError;

/// 20 Hz at the 1 kHz control rate.
pub const DEFAULT_DECIMATION: u64 = 50;

#[derive(Debug)]
struct Subscriber {
    decimation: u64,
    frames: u64,
    seq: u64,
    tx: broadcast::Sender<TelemetryEnvelope>,
}

#[derive(Debug, Default)]
pub struct Hub {
    subs: Vec<Subscriber>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every `decimation`-th frame from now on, buffered up to `buffer`
    /// envelopes.
    pub fn subscribe(&mut self, decimation: u64, buffer: usize) -> Result<Subscription, CommandError> {
        if decimation == 0 || buffer == 0 {
            return Err(CommandError::BadArgs(format!(
                "decimation ({decimation}) and buffer ({buffer}) must be at least 1"
            )));
        }
        let (tx, rx) = broadcast::channel(buffer);
        self.subs.push(Subscriber {
            decimation,
            frames: 0,
            seq: 0,
            tx,
        });
        Ok(Subscription { rx, decimation })
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    /// Never blocks; subscribers whose receiver is gone are dropped.
    pub fn publish(&mut self, frame: &TelemetryFrame, ctx: &FrameContext) {
        self.subs.retain_mut(|s| {
            s.frames += 1;
            if s.frames % s.decimation != 0 {
                return s.tx.receiver_count() > 0;
            }
            s.seq += 1;
            s.tx.send(TelemetryEnvelope::new(s.seq, frame, ctx)).is_ok()
        });
    }

    /// End every stream; readers drain what is buffered, then see the end.
    pub fn close(&mut self) {
        self.subs.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("the telemetry stream has ended")]
pub struct StreamEnded;

#[derive(Debug)]
pub struct Subscription {
    rx: broadcast::Receiver<TelemetryEnvelope>,
    decimation: u64,
}

impl Subscription {
    pub fn decimation(&self) -> u64 {
        self.decimation
    }

    /// Next buffered envelope, skipping over any that were overwritten.
    /// `None` once the stream has ended.
    pub async fn recv(&mut self) -> Option<TelemetryEnvelope> {
        loop {
            match self.rx.recv().await {
                Ok(e) => return Some(e),
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    }

    /// Like [`recv`](Self::recv) without waiting; `Ok(None)` when nothing is
    /// buffered.
    pub fn try_recv(&mut self) -> Result<Option<TelemetryEnvelope>, StreamEnded> {
        loop {
            match self.rx.try_recv() {
                Ok(e) => return Ok(Some(e)),
                Err(TryRecvError::Lagged(_)) => continue,
                Err(TryRecvError::Empty) => return Ok(None),
                Err(TryRecvError::Closed) => return Err(StreamEnded),
            }
        }
    }
}
