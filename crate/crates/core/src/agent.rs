//! Pieces shared by the scalarized and envelope agents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Mlp, NetworkSpec, OptimizerConfig};
use crate::objectives::{PreferenceVector, N_OBJECTIVES};

/// Action values of a scalar Q-function.
pub trait QFunction {
    fn q_values(&self, state: &[f64]) -> Result<Vec<f64>>;
}

impl QFunction for Mlp {
    fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.forward(state)
    }
}

/// Preference-conditioned vector action values, one `[tran, tele]` row per
/// action.
pub trait VectorQFunction {
    fn vector_q(&self, state: &[f64], omega: &PreferenceVector) -> Result<Vec<[f64; N_OBJECTIVES]>>;
}

/// Network input for a preference-conditioned net: state followed by ω.
pub fn conditioned_input(state: &[f64], omega: &PreferenceVector) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + N_OBJECTIVES);
    x.extend_from_slice(state);
    x.extend_from_slice(&omega.weights());
    x
}

/// Splits a flat `|A| * H` output into per-action rows (index `a * H + h`).
pub fn vector_rows(flat: &[f64]) -> Vec<[f64; N_OBJECTIVES]> {
    flat.chunks_exact(N_OBJECTIVES).map(|c| [c[0], c[1]]).collect()
}

impl VectorQFunction for Mlp {
    fn vector_q(&self, state: &[f64], omega: &PreferenceVector) -> Result<Vec<[f64; N_OBJECTIVES]>> {
        Ok(vector_rows(&self.forward(&conditioned_input(state, omega))?))
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn greedy(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, else greedy.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        greedy(values)
    }
}

/// Per-episode exploration rate: exponential decay from `start`, reaching
/// `end` after `decay_fraction` of the episodes, never below `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.1,
            decay_fraction: 0.5,
            floor: 0.05,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.start) && unit(self.end) && unit(self.floor) && self.end > 0.0) {
            return Err(Error::config("epsilon values must lie in [0, 1] with end > 0"));
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return Err(Error::config("epsilon.decay_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Multiplicative per-episode factor for a run of `episodes` episodes.
    pub fn factor(&self, episodes: usize) -> f64 {
        if self.start <= 0.0 {
            return 1.0;
        }
        let span = (self.decay_fraction * episodes as f64).max(1.0);
        (self.end / self.start).powf(1.0 / span)
    }

    pub fn value(&self, episode: usize, episodes: usize) -> f64 {
        (self.start * self.factor(episodes).powi(episode as i32)).max(self.floor)
    }
}

/// Settings shared by both agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Learning steps between target-network clones.
    pub target_period: usize,
    pub pool_capacity: usize,
    /// Learning starts once the pool holds this many transitions.
    pub learn_start: usize,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub epsilon: EpsilonSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            batch_size: 64,
            target_period: 500,
            pool_capacity: 2_000_000,
            learn_start: 64,
            hidden: vec![256; 4],
            optimizer: OptimizerConfig::default(),
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("agent.gamma must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.target_period == 0 || self.pool_capacity == 0 {
            return Err(Error::config("agent batch_size, target_period and pool_capacity must be >= 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("agent.hidden needs at least one nonzero layer width"));
        }
        self.optimizer.validate()?;
        self.epsilon.validate()
    }

    pub fn network_spec(&self, input_dim: usize, output_dim: usize) -> NetworkSpec {
        NetworkSpec::new(input_dim, self.hidden.clone(), output_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_ties_go_low() {
        let mut q = vec![0.0; 15];
        q[7] = 1.0;
        assert_eq!(greedy(&q), 7);
        q[2] = 2.0;
        q[9] = 2.0;
        assert_eq!(greedy(&q), 2);
        assert_eq!(greedy(&[0.0; 15]), 0);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        // chi-square against uniform over 15 actions, 14 dof, p = 0.001 cutoff
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = [0.0; 15];
        let n = 100_000;
        let mut counts = [0usize; 15];
        for _ in 0..n {
            counts[epsilon_greedy(&q, 1.0, &mut rng)] += 1;
        }
        let expected = n as f64 / 15.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 36.12, "chi2 = {chi2}");
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = [0.0; 15];
        q[4] = 3.0;
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&q, 0.0, &mut rng), 4);
        }
    }

    #[test]
    fn epsilon_schedule_hits_end_at_decay_fraction() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0, 300), 1.0);
        assert!((s.value(150, 300) - 0.1).abs() < 1e-12);
        assert_eq!(s.value(299, 300), 0.05);
        let mut prev = f64::INFINITY;
        for e in 0..300 {
            let v = s.value(e, 300);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn vector_rows_layout() {
        let rows = vector_rows(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rows, vec![[1.0, 2.0], [3.0, 4.0]]);
    }
}
