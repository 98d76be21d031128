use std::collections::{HashSet, VecDeque};

use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;
use telerehab_core::control::ModeKind;
use telerehab_core::harness::config::master_center;
use telerehab_core::harness::ExperimentConfig;
use telerehab_core::kin2;
use telerehab_core::link::{MasterReference, RobotRole};
use telerehab_core::plant;
use telerehab_gateway::*;

fn service() -> SessionService {
    SessionService::new(ExperimentConfig::preset("exp3").unwrap()).unwrap()
}

fn ticks(s: &mut SessionService, n: usize) {
    for _ in 0..n {
        s.step().unwrap();
    }
}

/// What the session should look like from the operator's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Model {
    state: StateTag,
    mode: ModeName,
    has_demo: bool,
}

/// Whether `cmd` is accepted, and the states it may lead to (a replay can
/// finish by itself while the loop ticks afterwards).
fn oracle(m: Model, cmd: &Command) -> Option<Vec<Model>> {
    use StateTag::*;
    let running = m.state.is_running();
    let tag = |mode| if mode == ModeName::Phri { Phri } else { Tracking };
    let one = |state, mode, has_demo| Some(vec![Model { state, mode, has_demo }]);
    let replay_may_end = |m: Model| {
        if m.state == Replaying {
            Some(vec![m, Model { state: Tracking, ..m }])
        } else {
            Some(vec![m])
        }
    };
    match cmd {
        Command::Start => (!running).then(|| vec![Model { state: tag(m.mode), ..m }]),
        Command::Stop => running.then(|| vec![Model { state: Stopped, has_demo: m.has_demo || m.state == Recording, ..m }]),
        Command::SetMode { mode, .. } => match m.state {
            Recording => None,
            s if s.is_running() => one(tag(*mode), *mode, m.has_demo),
            s => one(s, *mode, m.has_demo),
        },
        Command::SelectTrajectory { .. } => match m.state {
            Recording => None,
            Replaying => one(Tracking, m.mode, m.has_demo),
            _ => Some(vec![m]),
        },
        Command::StartRecord => matches!(m.state, Tracking | Phri).then(|| vec![Model { state: Recording, ..m }]),
        Command::StopRecord => (m.state == Recording).then(|| vec![Model { state: tag(m.mode), has_demo: true, ..m }]),
        Command::StartReplay { .. } => (matches!(m.state, Tracking | Phri | Replaying) && m.has_demo)
            .then(|| vec![Model { state: Replaying, mode: ModeName::Tracking, ..m }, Model { state: Tracking, mode: ModeName::Tracking, ..m }]),
        Command::SetGains { .. } => replay_may_end(m),
        Command::InjectHandTarget { .. } => (m.mode == ModeName::Phri && matches!(m.state, Phri | Recording)).then(|| vec![m]),
    }
}

/// Ticks run after each command. Recordings get long enough that a replay
/// outlasts a few further commands.
fn gap(cmd: &Command) -> usize {
    if matches!(cmd, Command::StartRecord) {
        60
    } else {
        7
    }
}

fn observe(s: &SessionService, mode: ModeName) -> Model {
    Model { state: s.state(), mode, has_demo: s.demo().is_some() }
}

/// Structural facts that must hold in every reachable state.
fn check_invariants(s: &SessionService, m: &Model) {
    let ctx = s.context();
    assert_eq!(ctx.state, m.state);
    assert_eq!(s.session().is_none(), m.state == StateTag::Idle, "{m:?}");
    if !m.state.is_running() {
        return;
    }
    let sess = s.session().unwrap();
    let mode = sess.controller(RobotRole::Master).mode();
    assert!(mode.is_consistent(), "{m:?}");
    let phri = m.mode == ModeName::Phri && m.state != StateTag::Replaying;
    assert_eq!(mode.kind == ModeKind::Phri, phri, "{m:?}");
    if mode.kind == ModeKind::Tracking {
        assert_eq!(mode.ndob_enabled, s.config().master.ndob_enabled);
    }
    assert_eq!(sess.is_recording(), m.state == StateTag::Recording);
    assert_eq!(matches!(sess.reference(), MasterReference::Replay { .. }), m.state == StateTag::Replaying);
    assert_eq!(ctx.hand_target.is_some(), phri, "{m:?}");
    assert_eq!(ctx.replay_progress.is_some(), m.state == StateTag::Replaying);
}

#[test]
fn every_reachable_state_is_well_defined() {
    let alphabet = Command::alphabet();
    let start = Model { state: StateTag::Idle, mode: ModeName::Tracking, has_demo: false };
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, Vec::<Command>::new())]);
    let mut transitions = 0;
    while let Some((model, path)) = queue.pop_front() {
        for cmd in &alphabet {
            // Rebuild the state from scratch; sessions are not cloneable.
            let mut s = service();
            let mut mode = ModeName::Tracking;
            for c in &path {
                s.handle(c).unwrap();
                if let Command::SetMode { mode: m, .. } = c {
                    mode = *m;
                }
                if matches!(c, Command::StartReplay { .. }) {
                    mode = ModeName::Tracking;
                }
                ticks(&mut s, gap(c));
            }
            assert_eq!(observe(&s, mode), model, "replaying {path:?}");

            let result = s.handle(cmd);
            let expected = oracle(model, cmd);
            assert_eq!(result.is_ok(), expected.is_some(), "{cmd:?} from {model:?}: {result:?}");
            let Some(allowed) = expected else {
                let err = result.unwrap_err();
                match cmd {
                    Command::InjectHandTarget { .. } if model.mode != ModeName::Phri => {
                        assert_eq!(err, CommandError::ModeGuard { verb: "inject_hand_target" })
                    }
                    _ => assert!(matches!(err, CommandError::InvalidTransition { .. }), "{err:?}"),
                }
                // Rejections change nothing.
                ticks(&mut s, gap(cmd));
                let after = observe(&s, mode);
                assert!(oracle(model, &Command::SetGains { robot: RobotRole::Master, stiffness: 1.0, damping: None })
                    .unwrap()
                    .contains(&after));
                continue;
            };
            transitions += 1;
            if let Command::SetMode { mode: m, .. } = cmd {
                mode = *m;
            }
            if matches!(cmd, Command::StartReplay { .. }) {
                mode = ModeName::Tracking;
            }
            ticks(&mut s, gap(cmd));
            let next = observe(&s, mode);
            assert!(allowed.contains(&next), "{cmd:?} from {model:?} reached {next:?}");
            check_invariants(&s, &next);
            if seen.insert(next) {
                let mut p = path.clone();
                p.push(cmd.clone());
                queue.push_back((next, p));
            }
        }
    }
    // Idle/stopped and the four running tags, in both modes, with and
    // without a stored demo; only some combinations are reachable.
    let tags: HashSet<StateTag> = seen.iter().map(|m| m.state).collect();
    assert_eq!(tags.len(), 6, "{tags:?}");
    assert!(seen.iter().any(|m| m.state == StateTag::Recording && m.mode == ModeName::Phri));
    assert!(transitions >= seen.len());
}

#[test]
fn entering_phri_switches_the_master_observer_off() {
    let mut s = service();
    s.handle(&Command::Start).unwrap();
    ticks(&mut s, 10);
    let master = |s: &SessionService| s.session().unwrap().controller(RobotRole::Master).mode();
    assert!(master(&s).ndob_enabled);
    s.handle(&Command::SetMode { mode: ModeName::Phri, feedback: None }).unwrap();
    assert!(!master(&s).ndob_enabled);
    assert_eq!(master(&s).kind, ModeKind::Phri);
    assert!(s.master_mode().is_consistent());
    // The second robot keeps its observer.
    assert!(s.session().unwrap().controller(RobotRole::Second).mode().ndob_enabled);
}

#[test]
fn recording_twice_is_an_invalid_transition() {
    let mut s = service();
    s.handle(&Command::Start).unwrap();
    s.handle(&Command::StartRecord).unwrap();
    let err = s.handle(&Command::StartRecord).unwrap_err();
    assert!(matches!(err, CommandError::InvalidTransition { verb: "start_record", state: StateTag::Recording, .. }));
}

#[test]
fn hand_targets_are_refused_outside_phri() {
    let mut s = service();
    s.handle(&Command::Start).unwrap();
    let cmd = Command::InjectHandTarget { x: 0.3, y: 0.0, grip: true };
    assert_eq!(s.handle(&cmd).unwrap_err(), CommandError::ModeGuard { verb: "inject_hand_target" });
    assert_eq!(s.input(HandInput { x: 0.3, y: 0.0, grip: true }).unwrap_err(), CommandError::ModeGuard { verb: "input" });
}

fn phri_service() -> SessionService {
    let mut s = service();
    s.handle(&Command::SetMode { mode: ModeName::Phri, feedback: Some(false) }).unwrap();
    s.handle(&Command::Start).unwrap();
    s
}

#[test]
fn a_target_on_the_resting_hand_pulls_with_zero_force() {
    let mut s = phri_service();
    let here = s.session().unwrap().plant(RobotRole::Master).ee_position();
    s.input(HandInput { x: here[0], y: here[1], grip: true }).unwrap();
    let f = s.step().unwrap().unwrap();
    assert_eq!(f.hand_force, Vector2::zeros());
}

#[test]
fn releasing_the_grip_zeroes_the_hand_force_on_the_next_tick() {
    let mut s = phri_service();
    let target = master_center() + Vector2::new(0.03, 0.02);
    s.input(HandInput { x: target[0], y: target[1], grip: true }).unwrap();
    for _ in 0..200 {
        let f = s.step().unwrap().unwrap();
        assert!(f.hand_force.norm() > 0.0);
    }
    s.input(HandInput { x: target[0], y: target[1], grip: false }).unwrap();
    assert_eq!(s.step().unwrap().unwrap().hand_force, Vector2::zeros());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn injected_targets_are_clamped_into_the_workspace(x in -0.8f64..0.8, y in -0.8f64..0.8) {
        let mut s = phri_service();
        let model = s.config().master.plant.true_model.clone();
        let raw = Vector2::new(x, y);
        let reply = s.handle(&Command::InjectHandTarget { x, y, grip: true }).unwrap();
        let target = reply.target.unwrap();
        prop_assert!(kin2::in_workspace(&model, &target));
        if kin2::in_workspace(&model, &raw) {
            prop_assert_eq!(target, raw);
        } else {
            // Nearest reachable point, give or take the inward nudge.
            let nearest = kin2::clamp_to_workspace(&model, &raw);
            prop_assert!((target - nearest).norm() < 1e-6);
        }
        prop_assert_eq!(s.context().hand_target, Some(target));
    }
}

#[test]
fn a_slow_drag_lags_by_the_quasi_static_spring_stretch() {
    let mut s = phri_service();
    let cfg = s.config().clone();
    let model = cfg.master.plant.true_model.clone();
    let (k_h, d_h) = (cfg.session.hand.stiffness, cfg.session.hand.damping);
    let d_imp = cfg.master.gains.damping;
    let dt = s.dt();
    let v = 0.05;
    let dir = Vector2::new(1.0, 1.0).normalize();
    let home = s.session().unwrap().plant(RobotRole::Master).ee_position();
    let n = 1600;
    for k in 0..=n {
        assert!(kin2::in_workspace(&model, &(home + dir * (v * k as f64 * dt))), "ramp leaves the workspace");
    }

    // At constant velocity the hand spring balances the hand damper, the
    // controller's end-effector damper and joint friction seen at the tip:
    // K_h·lag = (D_h + D)ẋ + J⁻ᵀ F J⁻¹ ẋ.
    let quasi_static = |q: &Vector2<f64>, xdot: &Vector2<f64>| {
        let j = kin2::jacobian(&model, q);
        let j_inv = j.try_inverse().unwrap();
        let friction = j_inv.transpose() * plant::friction_torque(&model, &(j_inv * xdot));
        ((Matrix2::identity() * d_h + d_imp) * xdot + friction) / k_h
    };

    let mut worst_residual = 0.0f64;
    let mut lags = Vec::new();
    for k in 1..=n {
        let target = home + dir * (v * k as f64 * dt);
        s.input(HandInput { x: target[0], y: target[1], grip: true }).unwrap();
        let state = *s.session().unwrap().plant(RobotRole::Master).state();
        let x = s.session().unwrap().plant(RobotRole::Master).ee_position();
        let xdot = s.session().unwrap().plant(RobotRole::Master).ee_velocity();
        s.step().unwrap();
        if k as f64 * dt > 0.8 {
            let lag = target - x;
            worst_residual = worst_residual.max((lag - quasi_static(&state.q, &xdot)).norm());
            lags.push(lag.norm());
        }
    }
    let mean_lag = lags.iter().sum::<f64>() / lags.len() as f64;
    // The same balance at the commanded speed.
    let q = kin2::inverse_kinematics(&model, &(home + dir * (v * 1.2))).unwrap();
    let nominal = quasi_static(&q, &(dir * v)).norm();
    assert!(worst_residual < 2e-4, "{worst_residual}");
    assert!((mean_lag - nominal).abs() < 0.05 * nominal, "{mean_lag} vs {nominal}");
    // Hand and controller dampers alone: (10 + 2√30)·0.05/150 ≈ 7 mm.
    assert!((0.006..0.009).contains(&mean_lag), "{mean_lag}");
}
