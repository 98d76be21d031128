use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use telerehab_core::harness::ExperimentConfig;
use telerehab_core::kin2;
use telerehab_gateway::*;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn server() -> (Gateway, std::net::SocketAddr) {
    let gw = Gateway::spawn(ExperimentConfig::preset("exp3").unwrap(), GatewayConfig::default()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, gw.handle()));
    (gw, addr)
}

async fn next(ws: &mut Socket) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("server went quiet").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Skip telemetry and state updates until the matching message arrives.
async fn until(ws: &mut Socket, key: &str) -> Value {
    loop {
        let v = next(ws).await;
        if let Some(inner) = v.get(key) {
            return inner.clone();
        }
    }
}

async fn send(ws: &mut Socket, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn healthz_answers_ok() {
    let (_gw, addr) = server().await;
    let mut tcp = TcpStream::connect(addr).await.unwrap();
    tcp.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut reply = String::new();
    tcp.read_to_string(&mut reply).await.unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.ends_with("\r\n\r\nok"), "{reply}");
}

#[tokio::test(flavor = "multi_thread")]
async fn a_console_session_round_trip() {
    let (_gw, addr) = server().await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session?decimation=10")).await.unwrap();
    assert_eq!(next(&mut ws).await, json!({"state": "idle"}));

    send(&mut ws, json!({"cmd": "start"})).await;
    assert_eq!(until(&mut ws, "ack").await, json!({"cmd": "start", "ok": true}));
    let t = until(&mut ws, "telemetry").await;
    assert_eq!(t["state"], "tracking");
    assert_eq!(t["master"]["x"].as_array().unwrap().len(), 2);
    let first_seq = t["seq"].as_u64().unwrap();
    let t2 = until(&mut ws, "telemetry").await;
    assert!(t2["seq"].as_u64().unwrap() > first_seq);
    assert_eq!((t2["tick"].as_u64().unwrap() + 1) % 10, 0);

    // Drag input is only accepted in pHRI.
    send(&mut ws, json!({"cmd": "inject_hand_target", "x": 0.3, "y": 0.0})).await;
    let ack = until(&mut ws, "ack").await;
    assert_eq!(ack["ok"], false);
    assert!(ack["reason"].as_str().unwrap().contains("pHRI"));

    send(&mut ws, json!({"cmd": "set_mode", "mode": "phri"})).await;
    assert_eq!(until(&mut ws, "ack").await["ok"], true);
    assert_eq!(until(&mut ws, "state").await, "phri");

    // Far outside the reach of the arm: the echoed target is clamped.
    send(&mut ws, json!({"cmd": "inject_hand_target", "x": 2.0, "y": 0.0, "grip": true})).await;
    let ack = until(&mut ws, "ack").await;
    assert_eq!(ack["ok"], true);
    let target: Vec<f64> = serde_json::from_value(ack["target"].clone()).unwrap();
    let model = ExperimentConfig::preset("exp3").unwrap().master.plant.true_model;
    assert!(kin2::in_workspace(&model, &nalgebra::Vector2::new(target[0], target[1])));
    // An envelope from before the injection may still be buffered.
    while until(&mut ws, "telemetry").await["hand_target"] != ack["target"] {}

    send(&mut ws, json!({"input": {"x": 0.33, "y": 0.01, "grip": true}})).await;
    while until(&mut ws, "telemetry").await["hand_target"] != json!([0.33, 0.01]) {}

    send(&mut ws, json!({"cmd": "start_replay"})).await;
    let ack = until(&mut ws, "ack").await;
    assert_eq!(ack["ok"], false);
    assert!(ack["reason"].as_str().unwrap().contains("no demo"));

    send(&mut ws, json!({"cmd": "juggle"})).await;
    assert_eq!(until(&mut ws, "ack").await["cmd"], "juggle");

    send(&mut ws, json!({"cmd": "stop"})).await;
    assert_eq!(until(&mut ws, "ack").await["ok"], true);
    assert_eq!(until(&mut ws, "state").await, "stopped");
}

#[tokio::test(flavor = "multi_thread")]
async fn record_then_replay_over_the_socket() {
    let (_gw, addr) = server().await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.unwrap();
    for (cmd, state) in [
        (json!({"cmd": "set_mode", "mode": "phri"}), None),
        (json!({"cmd": "start"}), Some("phri")),
        (json!({"cmd": "start_record"}), Some("recording")),
    ] {
        send(&mut ws, cmd).await;
        assert_eq!(until(&mut ws, "ack").await["ok"], true);
        if let Some(s) = state {
            assert_eq!(until(&mut ws, "state").await, s);
        }
    }
    for k in 0..40 {
        let y = 0.002 * k as f64;
        send(&mut ws, json!({"input": {"x": 0.33, "y": y, "grip": true}})).await;
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    send(&mut ws, json!({"cmd": "start_record"})).await;
    assert_eq!(until(&mut ws, "ack").await["ok"], false);
    send(&mut ws, json!({"cmd": "stop_record"})).await;
    assert_eq!(until(&mut ws, "ack").await["ok"], true);
    assert_eq!(until(&mut ws, "state").await, "phri");
    send(&mut ws, json!({"cmd": "start_replay", "cutoff": 50.0})).await;
    assert_eq!(until(&mut ws, "ack").await["ok"], true);
    assert_eq!(until(&mut ws, "state").await, "replaying");
    // Progress is reported through telemetry until the replay ends.
    let mut progress = 0.0;
    loop {
        let v = next(&mut ws).await;
        if let Some(t) = v.get("telemetry") {
            if let Some(p) = t["replay_progress"].as_f64() {
                assert!(p >= progress);
                progress = p;
            }
        } else if v.get("state") == Some(&json!("tracking")) {
            break;
        }
    }
    assert!(progress > 0.5, "{progress}");
}
