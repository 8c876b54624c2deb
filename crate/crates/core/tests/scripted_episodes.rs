//! Episode metrics on hand-built layouts with known outcomes.

use vnet_morl::config::preset;
use vnet_morl::env::{BaseStation, BsKind, Env, JointAction, Layout, Scenario, TranAction, N_TRAN_ACTIONS};
use vnet_morl::metrics::EpisodeTracker;
use vnet_morl::traffic::{VehicleClass, VehicleState};

fn scenario(n_targets: usize) -> Scenario {
    let mut s = preset("desk").unwrap().scenario();
    s.instance.n_targets = n_targets;
    s
}

fn joint(tele: usize, tran: TranAction) -> JointAction {
    let tran = (0..N_TRAN_ACTIONS)
        .find(|&t| JointAction::new(0, t).unwrap().tran_action() == tran)
        .unwrap();
    JointAction::new(tele, tran).unwrap()
}

fn rbs(id: usize, x: f64, s: &Scenario) -> BaseStation {
    BaseStation::new(id, BsKind::Rbs, x, -10.0, &s.radio)
}

fn car(id: usize, class: VehicleClass, x: f64, lane: usize, v: f64, s: &Scenario) -> VehicleState {
    VehicleState::new(id, class, x, lane, v, &s.traffic)
}

/// Runs `policy` to the end and returns (tracker, env, hand-counted handovers).
fn play(s: &Scenario, layout: Layout, seed: u64, policy: impl Fn(usize) -> JointAction) -> (EpisodeTracker, Env, Vec<u32>) {
    let (mut env, _) = Env::with_layout(s, layout, seed).unwrap();
    let mut tracker = EpisodeTracker::new(env.n_targets(), 0.99);
    let mut counted = vec![0u32; env.n_targets()];
    let mut serving = env.serving().to_vec();
    while !env.is_done() {
        let actions: Vec<_> = (0..env.n_targets()).map(|_| policy(env.steps())).collect();
        let out = env.step(&actions).unwrap();
        tracker.add(&out.rewards);
        for (j, (&now, before)) in env.serving().iter().zip(serving.iter_mut()).enumerate() {
            if now != *before {
                counted[j] += 1;
                *before = now;
            }
        }
    }
    (tracker, env, counted)
}

#[test]
fn full_episode_has_zero_collision_rate() {
    let s = scenario(1);
    let layout = Layout {
        vehicles: vec![car(0, VehicleClass::Target, 0.0, 1, 25.0, &s)],
        stations: vec![rbs(0, 10.0, &s)],
    };
    let (tracker, env, counted) = play(&s, layout, 3, |_| joint(0, TranAction::Keep));
    let rec = tracker.finish(0, &env, None);
    assert_eq!(rec.steps, s.env.horizon_steps);
    assert_eq!(rec.delta_e, 0.0);
    assert_eq!(counted, vec![0]);
    assert_eq!(rec.xi_e, 0.0);
}

#[test]
fn forced_collision_ends_the_episode_early() {
    let s = scenario(1);
    // Target merges right into a car driving alongside it.
    let layout = Layout {
        vehicles: vec![
            car(0, VehicleClass::Target, 100.0, 0, 25.0, &s),
            car(1, VehicleClass::Surrounding, 100.0, 1, 25.0, &s),
        ],
        stations: vec![rbs(0, 100.0, &s)],
    };
    let (tracker, env, _) = play(&s, layout, 5, |_| joint(0, TranAction::LaneRight));
    let rec = tracker.finish(0, &env, None);
    let t_e = env.steps();
    assert!(t_e < s.env.horizon_steps, "no collision within the horizon");
    assert!(env.target(0).crashed);
    assert_eq!(rec.steps, t_e);
    assert_eq!(rec.delta_e, 1.0 - t_e as f64 / s.env.horizon_steps as f64);
}

#[test]
fn stepping_a_finished_episode_fails() {
    let s = scenario(1);
    let layout = Layout {
        vehicles: vec![
            car(0, VehicleClass::Target, 100.0, 0, 25.0, &s),
            car(1, VehicleClass::Surrounding, 100.0, 1, 25.0, &s),
        ],
        stations: vec![rbs(0, 100.0, &s)],
    };
    let (_, mut env, _) = play(&s, layout, 5, |_| joint(0, TranAction::LaneRight));
    assert!(env.step(&[joint(0, TranAction::Keep)]).is_err());
}

#[test]
fn handover_probability_matches_hand_count() {
    let s = scenario(2);
    // Two equidistant base stations: per-step fading flips the best one.
    let layout = Layout {
        vehicles: vec![
            car(0, VehicleClass::Target, 0.0, 0, 25.0, &s),
            car(1, VehicleClass::Target, 150.0, 2, 25.0, &s),
        ],
        stations: vec![rbs(0, 30.0, &s), rbs(1, 130.0, &s), rbs(2, 230.0, &s)],
    };
    let mut total = 0;
    for seed in 0..10 {
        let (tracker, env, counted) = play(&s, layout.clone(), seed, |_| joint(2, TranAction::Keep));
        assert_eq!(env.handovers(), counted.as_slice());
        let t = env.steps() as f64;
        let hand: f64 = counted.iter().map(|&c| (c as f64 / t).min(1.0)).sum::<f64>() / 2.0;
        let rec = tracker.finish(seed as usize, &env, None);
        assert!((rec.xi_e - hand).abs() < 1e-15, "seed {seed}: {} vs {hand}", rec.xi_e);
        assert!((0.0..=1.0).contains(&rec.xi_e));
        total += counted.iter().sum::<u32>();
    }
    assert!(total > 0, "layout never triggered a handover");
}

#[test]
fn mixed_policies_hand_count() {
    let s = scenario(2);
    let layout = Layout {
        vehicles: vec![
            car(0, VehicleClass::Target, 0.0, 0, 22.0, &s),
            car(1, VehicleClass::Target, 60.0, 1, 28.0, &s),
        ],
        stations: vec![
            rbs(0, 20.0, &s),
            BaseStation::new(1, BsKind::Tbs, 40.0, -10.0, &s.radio),
            BaseStation::new(2, BsKind::Tbs, 90.0, -10.0, &s.radio),
        ],
    };
    let (tracker, env, counted) = play(&s, layout, 11, |t| joint(t % 3, TranAction::Keep));
    let t = env.steps() as f64;
    let hand: f64 = counted.iter().map(|&c| (c as f64 / t).min(1.0)).sum::<f64>() / 2.0;
    let rec = tracker.finish(0, &env, None);
    assert_eq!(rec.xi_e, hand);
    assert_eq!(rec.delta_e, 1.0 - t / s.env.horizon_steps as f64);
}
