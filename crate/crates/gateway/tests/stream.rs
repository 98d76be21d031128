use std::time::{Duration, Instant};

use telerehab_core::harness::ExperimentConfig;
use telerehab_gateway::*;

fn cfg() -> ExperimentConfig {
    ExperimentConfig::preset("exp2").unwrap()
}

#[test]
fn hub_decimates_each_subscriber_independently() {
    let mut s = SessionService::new(cfg()).unwrap();
    let mut hub = Hub::new();
    let mut every = hub.subscribe(1, 1000).unwrap();
    let mut twentieth = hub.subscribe(20, 1000).unwrap();
    s.handle(&Command::Start).unwrap();
    for _ in 0..1000 {
        let f = s.step().unwrap().unwrap();
        hub.publish(&f, &s.context());
    }
    let drain = |sub: &mut Subscription| std::iter::from_fn(|| sub.try_recv().unwrap()).collect::<Vec<_>>();
    let all = drain(&mut every);
    assert_eq!(all.iter().map(|e| e.seq).collect::<Vec<_>>(), (1..=1000).collect::<Vec<_>>());
    assert_eq!(all.iter().map(|e| e.tick).collect::<Vec<_>>(), (0..1000).collect::<Vec<_>>());
    let some = drain(&mut twentieth);
    assert_eq!(some.len(), 50);
    for (i, e) in some.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
        assert_eq!(e.tick, 20 * (i as u64 + 1) - 1);
    }
    assert!(hub.subscribe(0, 1).is_err());
    hub.close();
    assert_eq!(every.try_recv(), Err(StreamEnded));
}

#[test]
fn dropped_subscribers_are_forgotten() {
    let mut s = SessionService::new(cfg()).unwrap();
    let mut hub = Hub::new();
    let keep = hub.subscribe(3, 1).unwrap();
    drop(hub.subscribe(1, 1).unwrap());
    s.handle(&Command::Start).unwrap();
    let f = s.step().unwrap().unwrap();
    hub.publish(&f, &s.context());
    assert_eq!(hub.len(), 1);
    assert_eq!(keep.decimation(), 3);
}

#[tokio::test]
async fn a_bounded_run_streams_every_frame_then_ends() {
    let gw = Gateway::spawn(cfg(), GatewayConfig { pacing: Pacing::Free, max_ticks: Some(1000) }).unwrap();
    let h = gw.handle();
    let mut sub = h.subscribe(1, 1024).await.unwrap();
    h.command(Command::Start).await.unwrap();
    let mut seqs = Vec::new();
    while let Some(e) = sub.recv().await {
        seqs.push(e.seq);
    }
    assert_eq!(seqs, (1..=1000).collect::<Vec<_>>());
    assert_eq!(h.state(), StateTag::Stopped);

    // A second run needs a fresh subscription.
    let mut sub = h.subscribe(20, 64).await.unwrap();
    h.command(Command::Start).await.unwrap();
    let mut n = 0;
    while sub.recv().await.is_some() {
        n += 1;
    }
    assert_eq!(n, 50);
}

#[tokio::test]
async fn a_paused_consumer_neither_stalls_the_loop_nor_gets_a_backlog() {
    let gw = Gateway::spawn(cfg(), GatewayConfig::default()).unwrap();
    let h = gw.handle();
    let decimation = 10;
    let mut sub = h.subscribe(decimation, 1).await.unwrap();
    h.command(Command::Start).await.unwrap();
    let started = Instant::now();
    tokio::time::sleep(Duration::from_secs(1)).await;

    // One buffered envelope, then nothing until the next decimated frame.
    let first = sub.try_recv().unwrap().expect("an envelope is waiting");
    assert_eq!(sub.try_recv().unwrap(), None);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(first.t > 0.8 && first.t <= elapsed + 0.02, "sim {} s after {elapsed} s", first.t);

    // The loop kept ticking at its own cadence: envelope n is always tick
    // n·decimation − 1, however many were overwritten.
    let mut last = first;
    for _ in 0..20 {
        let e = sub.recv().await.unwrap();
        assert_eq!(e.tick + 1, e.seq * decimation);
        assert!(e.seq > last.seq);
        last = e;
    }
    assert_eq!(first.tick + 1, first.seq * decimation);
    let wall = started.elapsed().as_secs_f64();
    assert!((last.t - wall).abs() < 0.1, "sim {} s vs wall {wall} s", last.t);
}

#[tokio::test]
async fn a_free_running_loop_finishes_while_nobody_reads() {
    let gw = Gateway::spawn(cfg(), GatewayConfig { pacing: Pacing::Free, max_ticks: Some(20_000) }).unwrap();
    let h = gw.handle();
    let mut sub = h.subscribe(1, 1).await.unwrap();
    let mut states = h.state_changes();
    h.command(Command::Start).await.unwrap();
    tokio::time::timeout(Duration::from_secs(60), states.wait_for(|s| *s == StateTag::Stopped))
        .await
        .expect("the run ends without a reader")
        .unwrap();
    // Only the final frame survived.
    let last = sub.recv().await.unwrap();
    assert_eq!((last.seq, last.tick), (20_000, 19_999));
    assert_eq!(sub.recv().await, None);
}

#[tokio::test]
async fn commands_after_shutdown_report_an_unknown_session() {
    let gw = Gateway::spawn(cfg(), GatewayConfig::default()).unwrap();
    let h = gw.handle();
    drop(gw);
    assert_eq!(h.command(Command::Start).await.unwrap_err(), CommandError::UnknownSession);
}
