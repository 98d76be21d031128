//! HTTP side: `/session` upgrades to the JSON WebSocket protocol and
//! `/healthz` answers "ok".

use std::collections::HashMap;
use std::future::pending;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;

use crate::hub::{Subscription, DEFAULT_DECIMATION};
use crate::protocol::{Ack, ClientMessage, ServerMessage, TelemetryEnvelope};
use crate::runtime::GatewayHandle;

/// Envelopes a connection may have queued before older ones are dropped.
const CONNECTION_BUFFER: usize = 1;

pub fn router(handle: GatewayHandle) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/session", get(upgrade))
        .with_state(handle)
}

pub async fn serve(listener: TcpListener, handle: GatewayHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle)).await
}

/// `/session?decimation=N` picks the telemetry rate for this connection.
async fn upgrade(
    ws: WebSocketUpgrade,
    State(handle): State<GatewayHandle>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let decimation = params
        .get("decimation")
        .and_then(|d| d.parse().ok())
        .filter(|d| *d >= 1)
        .unwrap_or(DEFAULT_DECIMATION);
    ws.on_upgrade(move |socket| connection(socket, handle, decimation))
}

async fn next_envelope(sub: &mut Option<Subscription>) -> Option<TelemetryEnvelope> {
    match sub {
        Some(s) => s.recv().await,
        None => pending().await,
    }
}

async fn connection(mut socket: WebSocket, handle: GatewayHandle, decimation: u64) {
    let mut states = handle.state_changes();
    let mut telemetry = handle.subscribe(decimation, CONNECTION_BUFFER).await.ok();
    let initial = *states.borrow_and_update();
    if send(&mut socket, &ServerMessage::State(initial)).await.is_err() {
        return;
    }
    loop {
        let out = tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => respond(&handle, text.as_str()).await,
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => None,
            },
            env = next_envelope(&mut telemetry) => match env {
                Some(e) => Some(ServerMessage::Telemetry(e)),
                None => {
                    telemetry = None;
                    None
                }
            },
            changed = states.changed() => {
                if changed.is_err() {
                    return;
                }
                let state = *states.borrow_and_update();
                if state.is_running() && telemetry.is_none() {
                    telemetry = handle.subscribe(decimation, CONNECTION_BUFFER).await.ok();
                }
                Some(ServerMessage::State(state))
            }
        };
        if let Some(msg) = out {
            if send(&mut socket, &msg).await.is_err() {
                return;
            }
        }
    }
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> Result<(), axum::Error> {
    socket.send(Message::Text(msg.to_json().into())).await
}

fn ack(cmd: impl Into<String>, result: Result<Option<nalgebra::Vector2<f64>>, String>) -> ServerMessage {
    let (ok, reason, target) = match result {
        Ok(target) => (true, None, target),
        Err(reason) => (false, Some(reason), None),
    };
    ServerMessage::Ack(Ack {
        cmd: cmd.into(),
        ok,
        reason,
        target,
    })
}

/// Commands are always acknowledged; drag input only when rejected, since
/// the accepted target is echoed in telemetry.
async fn respond(handle: &GatewayHandle, text: &str) -> Option<ServerMessage> {
    match ClientMessage::parse(text) {
        Ok(ClientMessage::Command(cmd)) => {
            let verb = cmd.verb();
            let result = handle.command(cmd).await.map(|r| r.target).map_err(|e| e.to_string());
            Some(ack(verb, result))
        }
        Ok(ClientMessage::Input(input)) => match handle.input(input).await {
            Ok(_) => None,
            Err(e) => Some(ack("input", Err(e.to_string()))),
        },
        Err(e) => Some(ack(e.verb.unwrap_or_else(|| "?".into()), Err(e.reason))),
    }
}
