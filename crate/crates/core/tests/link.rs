use nalgebra::Vector2;
use proptest::prelude::*;
use telerehab_core::control::ControlMode;
use telerehab_core::harness::ExperimentConfig;
use telerehab_core::kin2::{self, JointState};
use telerehab_core::link::*;
use telerehab_core::traj::{Shape, TrajectorySpec};

fn circle(cfg: &ExperimentConfig) -> TrajectorySpec {
    cfg.trajectory.spec().expect("exp2 has a trajectory")
}

fn session(cfg: &ExperimentConfig, reference: MasterReference, master_mode: ControlMode) -> Session {
    let start = match &reference {
        MasterReference::Trajectory(s) | MasterReference::Hand(HandTarget::Path(s)) => s.sample(0.0).x,
        _ => unreachable!(),
    };
    let at = |robot: &telerehab_core::harness::RobotConfig, x: Vector2<f64>| {
        JointState::at_rest(kin2::inverse_kinematics(&robot.plant.true_model, &x).unwrap())
    };
    let master = RobotSetup {
        plant: cfg.master.plant.clone(),
        controller: cfg.master.controller(master_mode).unwrap(),
        initial: at(&cfg.master, start),
    };
    let second = RobotSetup {
        plant: cfg.second.plant.clone(),
        controller: cfg.second.controller(ControlMode::tracking(true)).unwrap(),
        initial: at(&cfg.second, start + cfg.session.offset),
    };
    Session::new(cfg.session.clone(), master, second, reference).unwrap()
}

fn frames(mut s: Session, n: u64) -> Vec<TelemetryFrame> {
    let mut out = Vec::new();
    s.run(n, |f| out.push(*f)).unwrap();
    out
}

fn lossy() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("exp2").unwrap();
    cfg.session.channel.delay_ticks = 3;
    cfg.session.channel.jitter_ticks = 6;
    cfg.session.channel.drop_probability = 0.2;
    cfg.session.channel.seed = 11;
    cfg
}

#[test]
fn channel_delivers_in_seq_order_within_the_jitter_window() {
    let cfg = lossy().session.channel;
    let mut ch = Channel::new(&cfg, 0);
    let mut delivered = Vec::new();
    for tick in 0..5000u64 {
        ch.send(Packet { from: RobotRole::Master, seq: tick + 1, send_tick: tick, payload: Vector2::new(tick as f64, 0.0) })
            .unwrap();
        for p in ch.poll(tick).unwrap() {
            assert!(tick >= p.send_tick + cfg.delay_ticks && tick <= p.send_tick + cfg.delay_ticks + cfg.jitter_ticks);
            delivered.push(p.seq);
        }
    }
    assert!(delivered.windows(2).all(|w| w[1] > w[0]));
    let lost = 1.0 - delivered.len() as f64 / 5000.0;
    // Drops plus overtaken packets.
    assert!((0.2..0.6).contains(&lost), "{lost}");
}

#[test]
fn second_follows_the_latest_delivered_master_packet() {
    let cfg = lossy();
    let fs = frames(session(&cfg, MasterReference::Trajectory(circle(&cfg)), ControlMode::tracking(true)), 3000);
    // Replay the channel independently: its randomness depends only on the
    // number of sends, so the same seed reproduces the delivery schedule.
    let mut ch = Channel::new(&cfg.session.channel, 0);
    let mut latest: Option<Packet> = None;
    let mut held = 0;
    for (i, f) in fs.iter().enumerate() {
        ch.send(Packet { from: RobotRole::Master, seq: i as u64 + 1, send_tick: f.tick, payload: f.master.x }).unwrap();
        if let Some(p) = ch.poll(f.tick).unwrap().pop() {
            latest = Some(p);
        }
        match latest {
            Some(p) => assert_eq!(f.second.x_d, map_master_to_second(&cfg.session.offset, &p.payload), "tick {}", f.tick),
            None => held += 1,
        }
    }
    assert!(held >= cfg.session.channel.delay_ticks as usize);
}

#[test]
fn feedback_toggle_leaves_the_second_robot_alone() {
    let cfg = ExperimentConfig::preset("exp2").unwrap();
    let spec = circle(&cfg);
    let with = |fb: bool| {
        let mut mode = ControlMode::tracking(true);
        mode.feedback_enabled = fb;
        frames(session(&cfg, MasterReference::Trajectory(spec), mode), 2000)
    };
    let (on, off) = (with(true), with(false));
    for (a, b) in on.iter().zip(&off) {
        assert_eq!(a.second, b.second);
        assert_eq!(a.f_ff, b.f_ff);
    }
}

#[test]
fn rendered_force_depends_only_on_the_two_positions() {
    let cfg = ExperimentConfig::preset("exp3").unwrap();
    let hand = cfg.hand_path.unwrap();
    for fb in [true, false] {
        let fs = frames(session(&cfg, MasterReference::Hand(HandTarget::Path(hand)), ControlMode::phri(fb)), 2000);
        for f in &fs {
            // Ideal channel: x_S arrives on the tick it is sent.
            let expected = spring_force(&cfg.session.feedback, &unmap(&cfg.session.offset, &f.second.x), &f.master.x)
                .map(|v| v.clamp(-10.0, 10.0));
            assert_eq!(f.f_ff, expected);
        }
    }
}

#[test]
fn free_motion_feedback_is_biased_by_tracking_error() {
    let cfg = ExperimentConfig::preset("exp3").unwrap();
    let hand = cfg.hand_path.unwrap();
    let fs = frames(session(&cfg, MasterReference::Hand(HandTarget::Path(hand)), ControlMode::phri(true)), 8000);
    let k = cfg.session.feedback.stiffness.norm();
    let steady = &fs[2000..];
    let peak_force = steady.iter().map(|f| f.f_ff.norm()).fold(0.0, f64::max);
    let peak_err = steady.iter().map(|f| (f.second.x - f.second.x_d).norm()).fold(0.0, f64::max);
    // The master has just moved by at most one tick when x_S is rendered.
    let peak_step = fs.windows(2).skip(2000).map(|w| (w[1].master.x - w[0].master.x).norm()).fold(0.0, f64::max);
    assert!(steady.iter().map(|f| f.f_ff.norm()).sum::<f64>() / steady.len() as f64 > 0.05);
    assert!(peak_force <= k * (peak_err + peak_step) + 1e-12, "{peak_force} vs {}", k * (peak_err + peak_step));
}

#[test]
fn sessions_are_deterministic_per_seed() {
    let cfg = lossy();
    let spec = TrajectorySpec::new(Shape::figure_eight(), circle(&cfg).center);
    let run = |seed| {
        let mut c = cfg.clone();
        c.session.channel.seed = seed;
        frames(session(&c, MasterReference::Trajectory(spec), ControlMode::tracking(true)), 1500)
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert_ne!(a, run(4));
}

proptest! {
    #[test]
    fn packets_round_trip(second in any::<bool>(), seq in any::<u64>(), tick in any::<u64>(), x in -1e6f64..1e6, y in -1e6f64..1e6) {
        let p = Packet {
            from: if second { RobotRole::Second } else { RobotRole::Master },
            seq,
            send_tick: tick,
            payload: Vector2::new(x, y),
        };
        prop_assert_eq!(Packet::decode(&p.encode()).unwrap(), p);
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        if let Ok(p) = Packet::decode(&bytes) {
            prop_assert_eq!(p.encode().to_vec(), bytes);
        }
    }
}
