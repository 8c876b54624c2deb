//! Training and evaluation loops over the vehicular environment.

use std::time::Instant;

use rand::Rng;
use serde_json::json;

use crate::agent::{greedy, QFunction, VectorQFunction};
use crate::config::{Algorithm, ExperimentConfig, RewardScale};
use crate::env::{Env, JointAction, Observation, Scenario, N_ACTIONS};
use crate::envelope::{select_action, EnvelopeAgent};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeTracker, MetricsRecord};
use crate::neural::{Checkpoint, Mlp};
use crate::objectives::{PreferenceVector, RewardVector, N_OBJECTIVES};
use crate::parallel::Execution;
use crate::replay::{sample_preference, Transition};
use crate::rng::{child_seed, substream, Stream};
use crate::scalar::{ScalarAgent, Variant};

/// Frozen greedy policy.
#[derive(Debug, Clone)]
pub enum Policy {
    Scalar(Mlp),
    Envelope(Mlp),
}

impl Policy {
    pub fn network(&self) -> &Mlp {
        match self {
            Policy::Scalar(n) | Policy::Envelope(n) => n,
        }
    }

    pub fn is_envelope(&self) -> bool {
        matches!(self, Policy::Envelope(_))
    }

    /// Greedy action; `omega` is ignored by scalar policies.
    pub fn act(&self, obs: &[f64], omega: &PreferenceVector) -> Result<usize> {
        match self {
            Policy::Scalar(n) => Ok(greedy(&n.q_values(obs)?)),
            Policy::Envelope(n) => Ok(select_action(&n.vector_q(obs, omega)?, omega)),
        }
    }

    /// Checks that the network fits `algorithm` and the observation size.
    pub fn from_checkpoint(ckpt: &Checkpoint, algorithm: Algorithm, obs_dim: usize) -> Result<Self> {
        let net = ckpt.network()?;
        let spec = net.spec();
        let (want_in, want_out) = if algorithm.is_envelope() {
            (obs_dim + N_OBJECTIVES, N_ACTIONS * N_OBJECTIVES)
        } else {
            (obs_dim, N_ACTIONS)
        };
        if spec.input_dim != want_in || spec.output_dim != want_out {
            return Err(Error::SpecMismatch(format!(
                "checkpoint network is {}->{}, {} on this scenario needs {}->{}",
                spec.input_dim,
                spec.output_dim,
                algorithm.name(),
                want_in,
                want_out
            )));
        }
        if let Some(stored) = ckpt.meta.get("algorithm").and_then(|v| v.as_str()) {
            if stored != algorithm.name() {
                return Err(Error::SpecMismatch(format!(
                    "checkpoint was trained with {stored}, config asks for {}",
                    algorithm.name()
                )));
            }
        }
        Ok(if algorithm.is_envelope() {
            Policy::Envelope(net)
        } else {
            Policy::Scalar(net)
        })
    }
}

#[derive(Debug, Clone)]
pub enum Learner {
    Scalar(ScalarAgent),
    Envelope(EnvelopeAgent),
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(cfg: &ExperimentConfig, obs_dim: usize, rng: &mut R) -> Result<Self> {
        let agent = cfg.agent.clone();
        Ok(match cfg.algorithm {
            Algorithm::MoDqn => Learner::Scalar(ScalarAgent::new(agent, Variant::Dqn, obs_dim, N_ACTIONS, cfg.execution, rng)?),
            Algorithm::MoDdqn => {
                Learner::Scalar(ScalarAgent::new(agent, Variant::Ddqn, obs_dim, N_ACTIONS, cfg.execution, rng)?)
            }
            Algorithm::MoDdqnEnvelope => Learner::Envelope(EnvelopeAgent::new(
                agent,
                cfg.envelope.clone(),
                obs_dim,
                N_ACTIONS,
                cfg.execution,
                rng,
            )?),
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], omega: &PreferenceVector, epsilon: f64, rng: &mut R) -> Result<usize> {
        match self {
            Learner::Scalar(a) => a.act(obs, epsilon, rng),
            Learner::Envelope(a) => a.act(obs, omega, epsilon, rng),
        }
    }

    pub fn remember(&mut self, t: Transition) {
        match self {
            Learner::Scalar(a) => a.remember(t),
            Learner::Envelope(a) => a.remember(t),
        }
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, fraction: f64, rng: &mut R) -> Result<Option<f64>> {
        match self {
            Learner::Scalar(a) => a.train_step(rng),
            Learner::Envelope(a) => a.train_step(fraction, rng),
        }
    }

    pub fn network(&self) -> &Mlp {
        match self {
            Learner::Scalar(a) => a.online(),
            Learner::Envelope(a) => a.online(),
        }
    }

    pub fn policy(&self) -> Policy {
        match self {
            Learner::Scalar(a) => Policy::Scalar(a.online().clone()),
            Learner::Envelope(a) => Policy::Envelope(a.online().clone()),
        }
    }
}

/// Checkpoint of the learner's online network with run metadata.
pub fn checkpoint(learner: &Learner, cfg: &ExperimentConfig, episodes_done: usize) -> Checkpoint {
    Checkpoint::from_network(
        learner.network(),
        json!({
            "algorithm": cfg.algorithm.name(),
            "preset": cfg.preset,
            "seed": cfg.seed,
            "episodes_trained": episodes_done,
            "observation_dim": cfg.scenario().observation_dim(),
            "lambda_schedule": cfg.envelope.lambda,
            "gamma": cfg.agent.gamma,
        }),
    )
}

fn scaled(r: &RewardVector, s: &RewardScale) -> RewardVector {
    RewardVector::new(r.tran * s.tran, r.tele * s.tele)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub learner: Learner,
    /// Wall-clock duration of each episode in milliseconds.
    pub episode_ms: Vec<f64>,
    pub env_steps: usize,
}

/// Trains the configured agent. `on_episode` sees every finished episode.
pub fn train<F>(cfg: &ExperimentConfig, mut on_episode: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRecord, &Learner) -> Result<()>,
{
    cfg.validate()?;
    let scenario = cfg.scenario();
    let mut init_rng = substream(cfg.seed, Stream::Init);
    let mut act_rng = substream(cfg.seed, Stream::Agent);
    let mut replay_rng = substream(cfg.seed, Stream::Replay);
    let mut learner = Learner::new(cfg, scenario.observation_dim(), &mut init_rng)?;
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut episode_ms = Vec::with_capacity(cfg.episodes);
    let mut env_steps = 0;
    let default_omega = PreferenceVector::from_tran_weight(cfg.eval_omega_tran)?;

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        let epsilon = cfg.agent.epsilon.value(episode, cfg.episodes);
        let fraction = if cfg.episodes > 1 {
            episode as f64 / (cfg.episodes - 1) as f64
        } else {
            1.0
        };
        let omega = if cfg.algorithm.is_envelope() {
            sample_preference(&mut act_rng)
        } else {
            default_omega
        };
        let (mut env, mut obs) = Env::reset(&scenario, child_seed(cfg.seed, Stream::Env, episode as u64))?;
        let mut tracker = EpisodeTracker::new(env.n_targets(), cfg.agent.gamma);
        while !env.is_done() {
            let flat = obs
                .iter()
                .map(|o| learner.act(o, &omega, epsilon, &mut act_rng))
                .collect::<Result<Vec<_>>>()?;
            let actions = flat.iter().map(|&a| JointAction::from_flat(a)).collect::<Result<Vec<_>>>()?;
            let out = env.step(&actions)?;
            env_steps += 1;
            tracker.add(&out.rewards);
            for (j, (state, next)) in obs.into_iter().zip(&out.observations).enumerate() {
                learner.remember(Transition {
                    state,
                    action: flat[j],
                    reward: scaled(&out.rewards[j], &cfg.learner_reward_scale),
                    next_state: next.clone(),
                    terminal: out.done,
                });
            }
            learner.train_step(fraction, &mut replay_rng)?;
            obs = out.observations;
        }
        let record = tracker.finish(
            episode,
            &env,
            cfg.algorithm.is_envelope().then_some(omega.tran()),
        );
        on_episode(&record, &learner)?;
        records.push(record);
        episode_ms.push(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(TrainOutcome {
        records,
        learner,
        episode_ms,
        env_steps,
    })
}

/// One greedy episode of `policy` under `omega` on the layout drawn from `seed`.
pub fn rollout(
    policy: &Policy,
    scenario: &Scenario,
    gamma: f64,
    omega: &PreferenceVector,
    seed: u64,
    episode: usize,
) -> Result<MetricsRecord> {
    let (mut env, mut obs): (Env, Vec<Observation>) = Env::reset(scenario, seed)?;
    let mut tracker = EpisodeTracker::new(env.n_targets(), gamma);
    while !env.is_done() {
        let actions = obs
            .iter()
            .map(|o| JointAction::from_flat(policy.act(o, omega)?))
            .collect::<Result<Vec<_>>>()?;
        let out = env.step(&actions)?;
        tracker.add(&out.rewards);
        obs = out.observations;
    }
    Ok(tracker.finish(episode, &env, policy.is_envelope().then_some(omega.tran())))
}

/// Greedy evaluation over `episodes` layouts derived from `seed`, merged in
/// episode order.
pub fn evaluate(
    policy: &Policy,
    scenario: &Scenario,
    gamma: f64,
    omega: &PreferenceVector,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<MetricsRecord>> {
    if episodes == 0 {
        return Err(Error::domain("evaluation needs at least one episode"));
    }
    exec.map(episodes, |e| {
        rollout(policy, scenario, gamma, omega, child_seed(seed, Stream::Eval, e as u64), e)
    })
    .into_iter()
    .collect()
}
