use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vnet_morl::config::preset;
use vnet_morl::env::{choose_station, BaseStation, BsKind, Env, JointAction, Scenario, TelePolicy, N_ACTIONS};
use vnet_morl::traffic::TrafficConfig;

fn desk() -> Scenario {
    preset("desk").unwrap().scenario()
}

fn wr(rate: f64, quota: u32, load: u32, mu: f64) -> f64 {
    let n = load.min(quota).max(1);
    rate / n as f64 * (1.0 - mu)
}

/// Exhaustive reference for the association rule.
fn brute_choice(policy: TelePolicy, current: usize, rates: &[f64], st: &[BaseStation]) -> usize {
    let score = |i: usize| {
        let b = &st[i];
        match policy {
            TelePolicy::MaxRate => rates[i],
            TelePolicy::VacantWeightedRate => wr(rates[i], b.quota, b.load + 1, 0.0),
            TelePolicy::WeightedRate => {
                let mu = match (i == current, b.kind) {
                    (true, _) => 0.0,
                    (false, BsKind::Rbs) => 0.1,
                    (false, BsKind::Tbs) => 0.5,
                };
                wr(rates[i], b.quota, b.load + 1, mu)
            }
        }
    };
    let mut pool: Vec<usize> = (0..st.len()).collect();
    if policy == TelePolicy::VacantWeightedRate && pool.iter().any(|&i| st[i].load < st[i].quota) {
        pool.retain(|&i| st[i].load < st[i].quota);
    }
    let best = pool.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = pool.into_iter().filter(|&i| score(i) == best).collect();
    if winners.contains(&current) {
        current
    } else {
        winners[0]
    }
}

#[test]
fn association_matches_brute_force() {
    let radio = desk().radio;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let policies = [TelePolicy::WeightedRate, TelePolicy::VacantWeightedRate, TelePolicy::MaxRate];
    for case in 0..20_000 {
        let n = rng.random_range(1..7);
        let stations: Vec<BaseStation> = (0..n)
            .map(|i| {
                let kind = if rng.random_bool(0.5) { BsKind::Rbs } else { BsKind::Tbs };
                let mut b = BaseStation::new(i, kind, 0.0, 0.0, &radio);
                b.quota = rng.random_range(1..4);
                b.load = rng.random_range(0..5);
                b
            })
            .collect();
        // coarse rates so ties are common
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64 * 1e6).collect();
        let current = if rng.random_bool(0.2) { usize::MAX } else { rng.random_range(0..n) };
        let policy = policies[case % 3];
        assert_eq!(
            choose_station(policy, current, &rates, &stations).unwrap(),
            brute_choice(policy, current, &rates, &stations),
            "case {case}: {policy:?} current {current} rates {rates:?} stations {stations:?}"
        );
    }
}

fn ring_ok(x: f64, cfg: &TrafficConfig) -> bool {
    (0.0..cfg.road_length_m).contains(&x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_episodes_respect_invariants(seed in 0u64..10_000, script in prop::collection::vec(0..N_ACTIONS, 30)) {
        let s = desk();
        let (mut env, obs) = Env::reset(&s, seed).unwrap();
        let dim = s.observation_dim();
        prop_assert!(obs.iter().all(|o| o.len() == dim));
        let mut t = 0;
        while !env.is_done() {
            let a = JointAction::from_flat(script[t % script.len()]).unwrap();
            let out = env.step(&vec![a; env.n_targets()]).unwrap();
            t += 1;
            prop_assert_eq!(env.steps(), t);
            prop_assert!(t <= s.env.horizon_steps);
            for o in &out.observations {
                prop_assert_eq!(o.len(), dim);
                prop_assert!(o.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            }
            for r in &out.rewards {
                prop_assert!((0.0..=1.0).contains(&r.tran));
                prop_assert!(r.tele.is_finite() && r.tele >= 0.0);
            }
            let load: u32 = env.stations().iter().map(|b| b.load).sum();
            prop_assert_eq!(load as usize, env.n_targets());
            for j in 0..env.n_targets() {
                prop_assert!(env.serving()[j] < env.stations().len());
                prop_assert!((0.0..=1.0).contains(&env.ho_probability(j)));
            }
            for v in &env.world().vehicles {
                prop_assert!(ring_ok(v.x, &s.traffic), "x = {}", v.x);
                prop_assert!(v.speed >= 0.0 && v.speed <= s.traffic.v_hard_max_mps + 1e-9);
                prop_assert!(v.lane < s.traffic.n_lanes);
            }
            prop_assert_eq!(out.done, out.collided.iter().any(|&c| c) || t == s.env.horizon_steps);
        }
    }

    #[test]
    fn reset_is_a_pure_function_of_the_seed(seed in 0u64..1_000_000) {
        let s = desk();
        let (_, a) = Env::reset(&s, seed).unwrap();
        let (_, b) = Env::reset(&s, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn flat_actions_round_trip(flat in 0..N_ACTIONS) {
        prop_assert_eq!(JointAction::from_flat(flat).unwrap().flat(), flat);
    }
}

#[test]
fn out_of_range_actions_fail() {
    assert!(JointAction::from_flat(N_ACTIONS).is_err());
    let s = desk();
    let (mut env, _) = Env::reset(&s, 0).unwrap();
    assert!(env.step(&[JointAction::from_flat(0).unwrap()]).is_err());
}
