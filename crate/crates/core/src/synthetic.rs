//! Two-state, three-action, two-objective episodic MDP whose deterministic
//! policies can be enumerated, used to check that envelope training recovers
//! the convex coverage set.
//!
//! From `s0`: action 0 pays (1, 0) and ends, action 1 pays (0, 1) and ends,
//! action 2 pays (0.2, 0.2) and moves to `s1`. From `s1`: action 0 pays
//! (0.6, 0.6), action 1 pays (0.3, 0), action 2 pays (0, 0.3); all end.

use serde::Serialize;

use crate::agent::{AgentConfig, EpsilonSchedule, VectorQFunction};
use crate::envelope::{select_action, EnvelopeAgent, EnvelopeConfig};
use crate::error::Result;
use crate::neural::{Mlp, OptimizerConfig};
use crate::objectives::{PreferenceVector, RewardVector};
use crate::pareto;
use crate::parallel::Execution;
use crate::replay::{sample_preference, Transition};
use crate::rng::{substream, Stream};

pub const N_STATES: usize = 2;
pub const N_ACTIONS: usize = 3;

const REWARDS: [[[f64; 2]; N_ACTIONS]; N_STATES] = [
    [[1.0, 0.0], [0.0, 1.0], [0.2, 0.2]],
    [[0.6, 0.6], [0.3, 0.0], [0.0, 0.3]],
];

/// Reward and next state (`None` when the episode ends).
pub fn step(state: usize, action: usize) -> ([f64; 2], Option<usize>) {
    let next = (state == 0 && action == 2).then_some(1);
    (REWARDS[state][action], next)
}

pub fn observe(state: usize) -> Vec<f64> {
    let mut x = vec![0.0; N_STATES];
    x[state] = 1.0;
    x
}

/// Discounted return from `s0` of every deterministic policy
/// `(action in s0, action in s1)`.
pub fn policy_returns(gamma: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(N_ACTIONS * N_ACTIONS);
    for a0 in 0..N_ACTIONS {
        for a1 in 0..N_ACTIONS {
            let (r0, next) = step(0, a0);
            let ret = match next {
                Some(s) => {
                    let (r1, _) = step(s, a1);
                    [r0[0] + gamma * r1[0], r0[1] + gamma * r1[1]]
                }
                None => r0,
            };
            out.push(ret);
        }
    }
    out
}

/// Distinct CCS vertices of the enumerated policy returns.
pub fn ccs_vertices(gamma: f64) -> Result<Vec<[f64; 2]>> {
    let returns = policy_returns(gamma);
    Ok(pareto::ccs(&returns)?.into_iter().map(|i| returns[i]).collect())
}

/// Return of the greedy policy of `net` under `omega`.
pub fn greedy_return<Q: VectorQFunction + ?Sized>(net: &Q, omega: &PreferenceVector, gamma: f64) -> Result<[f64; 2]> {
    let mut state = 0;
    let mut ret = [0.0; 2];
    let mut discount = 1.0;
    loop {
        let a = select_action(&net.vector_q(&observe(state), omega)?, omega);
        let (r, next) = step(state, a);
        ret[0] += discount * r[0];
        ret[1] += discount * r[1];
        discount *= gamma;
        match next {
            Some(s) => state = s,
            None => return Ok(ret),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticReport {
    pub seed: u64,
    pub steps: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Greedy returns for an 11-point preference sweep.
    pub sweep_returns: Vec<[f64; 2]>,
    /// For each vertex, the ∞-norm distance to the closest sweep return.
    pub vertex_errors: Vec<f64>,
}

impl SyntheticReport {
    pub fn max_error(&self) -> f64 {
        self.vertex_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub const GAMMA: f64 = 0.9;

pub fn agent_config() -> AgentConfig {
    AgentConfig {
        gamma: GAMMA,
        batch_size: 32,
        target_period: 50,
        pool_capacity: 10_000,
        learn_start: 32,
        hidden: vec![32, 32],
        optimizer: OptimizerConfig {
            learning_rate: 1e-3,
            ..OptimizerConfig::default()
        },
        epsilon: EpsilonSchedule::default(),
    }
}

/// Trains an envelope agent for `steps` environment steps (one learning step
/// each) and evaluates its greedy front.
pub fn train_envelope(seed: u64, steps: usize, exec: Execution) -> Result<SyntheticReport> {
    let cfg = agent_config();
    let mut init_rng = substream(seed, Stream::Init);
    let mut rng = substream(seed, Stream::Synthetic);
    let mut agent = EnvelopeAgent::new(cfg.clone(), EnvelopeConfig::default(), N_STATES, N_ACTIONS, exec, &mut init_rng)?;
    let mut state = 0;
    let mut omega = sample_preference(&mut rng);
    for t in 0..steps {
        let fraction = if steps > 1 { t as f64 / (steps - 1) as f64 } else { 1.0 };
        let epsilon = (1.0 - fraction).max(0.1);
        let obs = observe(state);
        let action = agent.act(&obs, &omega, epsilon, &mut rng)?;
        let (r, next) = step(state, action);
        agent.remember(Transition {
            state: obs,
            action,
            reward: RewardVector::new(r[0], r[1]),
            next_state: observe(next.unwrap_or(state)),
            terminal: next.is_none(),
        });
        agent.train_step(fraction, &mut rng)?;
        match next {
            Some(s) => state = s,
            None => {
                state = 0;
                omega = sample_preference(&mut rng);
            }
        }
    }
    report(seed, steps, agent.online())
}

fn report(seed: u64, steps: usize, net: &Mlp) -> Result<SyntheticReport> {
    let vertices = ccs_vertices(GAMMA)?;
    let sweep_returns = PreferenceVector::sweep(11)
        .iter()
        .map(|om| greedy_return(net, om, GAMMA))
        .collect::<Result<Vec<_>>>()?;
    let vertex_errors = vertices
        .iter()
        .map(|v| {
            sweep_returns
                .iter()
                .map(|r| (r[0] - v[0]).abs().max((r[1] - v[1]).abs()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(SyntheticReport {
        seed,
        steps,
        vertices,
        sweep_returns,
        vertex_errors,
    })
}
