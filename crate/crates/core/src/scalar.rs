//! Scalarized MO-DQN / MO-DDQN baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{epsilon_greedy, greedy, AgentConfig, QFunction};
use crate::error::{Error, Result};
use crate::neural::{clone_into, Mlp, Optimizer};
use crate::objectives::RewardVector;
use crate::parallel::Execution;
use crate::replay::{Transition, TransitionPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dqn,
    Ddqn,
}

/// Sum of the reward components; the priorities live in the reward weights.
pub fn scalarize(r: &RewardVector) -> f64 {
    r.tran + r.tele
}

/// `r + gamma * max_a Q_target(s', a)`, or `r` on terminal transitions.
pub fn dqn_target(reward: f64, terminal: bool, gamma: f64, q_target_next: &[f64]) -> f64 {
    if terminal {
        return reward;
    }
    reward + gamma * q_target_next[greedy(q_target_next)]
}

/// `r + gamma * Q_target(s', argmax_a Q_eval(s', a))`, or `r` on terminal
/// transitions.
pub fn ddqn_target(reward: f64, terminal: bool, gamma: f64, q_eval_next: &[f64], q_target_next: &[f64]) -> f64 {
    if terminal {
        return reward;
    }
    reward + gamma * q_target_next[greedy(q_eval_next)]
}

/// TD targets of a batch under either variant.
pub fn td_targets<E, T>(batch: &[&Transition], q_eval: &E, q_target: &T, variant: Variant, gamma: f64) -> Result<Vec<f64>>
where
    E: QFunction + ?Sized,
    T: QFunction + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    batch
        .iter()
        .map(|t| {
            let r = scalarize(&t.reward);
            if t.terminal {
                return Ok(r);
            }
            let qt = q_target.q_values(&t.next_state)?;
            Ok(match variant {
                Variant::Dqn => dqn_target(r, false, gamma, &qt),
                Variant::Ddqn => ddqn_target(r, false, gamma, &q_eval.q_values(&t.next_state)?, &qt),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScalarAgent {
    cfg: AgentConfig,
    variant: Variant,
    online: Mlp,
    target: Mlp,
    optimizer: Optimizer,
    pool: TransitionPool,
    learn_steps: usize,
    exec: Execution,
}

impl ScalarAgent {
    pub fn new<R: Rng + ?Sized>(
        cfg: AgentConfig,
        variant: Variant,
        obs_dim: usize,
        n_actions: usize,
        exec: Execution,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let online = Mlp::new(cfg.network_spec(obs_dim, n_actions), rng)?;
        Self::from_network(cfg, variant, online, exec)
    }

    pub fn from_network(cfg: AgentConfig, variant: Variant, online: Mlp, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            optimizer: Optimizer::new(cfg.optimizer.clone(), &online),
            pool: TransitionPool::new(cfg.pool_capacity)?,
            target: online.clone(),
            online,
            variant,
            cfg,
            learn_steps: 0,
            exec,
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn learn_steps(&self) -> usize {
        self.learn_steps
    }

    pub fn pool(&self) -> &TransitionPool {
        &self.pool
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(epsilon_greedy(&self.online.forward(state)?, epsilon, rng))
    }

    pub fn remember(&mut self, t: Transition) {
        self.pool.push(t);
    }

    /// One gradient step on the mean squared TD error of a sampled batch.
    /// Returns `None` until the pool holds enough transitions.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        let n = self.cfg.batch_size;
        if self.pool.len() < n.max(self.cfg.learn_start) {
            return Ok(None);
        }
        let batch = self.pool.sample(n, rng)?;
        let (online, target, variant, gamma) = (&self.online, &self.target, self.variant, self.cfg.gamma);
        let targets = self
            .exec
            .map(batch.len(), |i| td_targets(&batch[i..=i], online, target, variant, gamma).map(|y| y[0]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let (loss, mut grads) = self.online.batch_gradient(&inputs, self.exec, |i, out| {
            let diff = out[actions[i]] - targets[i];
            let mut g = vec![0.0; out.len()];
            g[actions[i]] = 2.0 * diff;
            (diff * diff, g)
        })?;
        let scale = 1.0 / n as f64;
        grads.scale(scale);
        self.optimizer.step(&mut self.online, &grads)?;
        self.learn_steps += 1;
        if self.learn_steps % self.cfg.target_period == 0 {
            clone_into(&self.online, &mut self.target)?;
        }
        Ok(Some(loss * scale))
    }
}
