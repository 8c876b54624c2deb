//! Envelope MO-DDQN: a preference-conditioned vector Q-network trained on
//! envelope targets with a homotopy loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{conditioned_input, greedy, AgentConfig, VectorQFunction};
use crate::error::{Error, Result};
use crate::neural::{clone_into, Mlp, Optimizer};
use crate::objectives::{PreferenceVector, N_OBJECTIVES};
use crate::parallel::Execution;
use crate::replay::{PreferencePool, Transition, TransitionPool};

type Row = [f64; N_OBJECTIVES];

/// Path of λ from 0 to 1 over the training fraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    #[default]
    Linear,
    Cosine,
}

impl LambdaSchedule {
    pub fn value(self, fraction: f64) -> f64 {
        let f = fraction.clamp(0.0, 1.0);
        match self {
            LambdaSchedule::Linear => f,
            LambdaSchedule::Cosine => 0.5 * (1.0 - (std::f64::consts::PI * f).cos()),
        }
    }
}

/// Network used to pick the maximizing (action, preference) pair of a target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelection {
    /// Select and evaluate with the target network.
    #[default]
    Target,
    /// Select with the online network, evaluate with the target network.
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub n_omega: usize,
    pub lambda: LambdaSchedule,
    pub selection: TargetSelection,
    /// Length of the recent-preference ring kept by the preference pool.
    pub preference_history: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            n_omega: 4,
            lambda: LambdaSchedule::Linear,
            selection: TargetSelection::Target,
            preference_history: 0,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_omega == 0 {
            return Err(Error::config("envelope.n_omega must be >= 1"));
        }
        Ok(())
    }
}

/// Greedy action under ω; the lowest index wins ties.
pub fn select_action(rows: &[Row], omega: &PreferenceVector) -> usize {
    let utilities: Vec<f64> = rows.iter().map(|q| omega.dot(q)).collect();
    greedy(&utilities)
}

/// Envelope target from precomputed next-state rows.
///
/// `selector[k]` and `evaluator[k]` hold the next-state rows under the k-th
/// candidate preference. The pair (a, k) maximizing `omega_g · selector[k][a]`
/// is chosen (first in preference order, then action order, on ties) and the
/// full vector `evaluator[k][a]` is backed up.
pub fn envelope_target_from_rows(
    reward: Row,
    terminal: bool,
    gamma: f64,
    omega_g: &PreferenceVector,
    selector: &[Vec<Row>],
    evaluator: &[Vec<Row>],
) -> Row {
    if terminal {
        return reward;
    }
    let mut best = (0, 0);
    let mut best_u = f64::NEG_INFINITY;
    for (k, rows) in selector.iter().enumerate() {
        for (a, q) in rows.iter().enumerate() {
            let u = omega_g.dot(q);
            if u > best_u {
                best_u = u;
                best = (k, a);
            }
        }
    }
    let q = evaluator[best.0][best.1];
    [reward[0] + gamma * q[0], reward[1] + gamma * q[1]]
}

/// Envelope target of one transition for preference `omega_g` over the
/// candidate set `w`.
#[allow(clippy::too_many_arguments)]
pub fn envelope_target<S, E>(
    reward: Row,
    terminal: bool,
    gamma: f64,
    next_state: &[f64],
    omega_g: &PreferenceVector,
    w: &[PreferenceVector],
    selector: &S,
    evaluator: &E,
) -> Result<Row>
where
    S: VectorQFunction + ?Sized,
    E: VectorQFunction + ?Sized,
{
    if w.is_empty() {
        return Err(Error::Empty("preference set"));
    }
    if terminal {
        return Ok(reward);
    }
    let sel = w
        .iter()
        .map(|om| selector.vector_q(next_state, om))
        .collect::<Result<Vec<_>>>()?;
    let eval = w
        .iter()
        .map(|om| evaluator.vector_q(next_state, om))
        .collect::<Result<Vec<_>>>()?;
    Ok(envelope_target_from_rows(reward, false, gamma, omega_g, &sel, &eval))
}

/// Homotopy loss `(1-λ)·mean‖ŷ-Q‖² + λ·mean|ωᵀŷ - ωᵀQ|` and its gradient
/// with respect to each `Q` row.
pub fn envelope_loss(targets: &[Row], q: &[Row], omegas: &[PreferenceVector], lambda: f64) -> Result<(f64, Vec<Row>)> {
    if targets.len() != q.len() || targets.len() != omegas.len() {
        return Err(Error::Shape {
            expected: targets.len(),
            got: q.len().min(omegas.len()),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda {lambda} outside [0, 1]")));
    }
    if targets.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(targets.len());
    for ((y, qv), om) in targets.iter().zip(q).zip(omegas) {
        let (l, g) = sample_loss(y, qv, om, lambda);
        loss += l;
        grads.push([g[0] / n, g[1] / n]);
    }
    Ok((loss / n, grads))
}

/// Unnormalized loss of one (target, Q) pair and its gradient.
fn sample_loss(y: &Row, q: &Row, omega: &PreferenceVector, lambda: f64) -> (f64, Row) {
    let d = [q[0] - y[0], q[1] - y[1]];
    let proj = omega.dot(q) - omega.dot(y);
    let w = omega.weights();
    let sign = if proj > 0.0 {
        1.0
    } else if proj < 0.0 {
        -1.0
    } else {
        0.0
    };
    let loss = (1.0 - lambda) * (d[0] * d[0] + d[1] * d[1]) + lambda * proj.abs();
    let grad = [
        (1.0 - lambda) * 2.0 * d[0] + lambda * sign * w[0],
        (1.0 - lambda) * 2.0 * d[1] + lambda * sign * w[1],
    ];
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct EnvelopeAgent {
    cfg: AgentConfig,
    env_cfg: EnvelopeConfig,
    n_actions: usize,
    online: Mlp,
    target: Mlp,
    optimizer: Optimizer,
    pool: TransitionPool,
    preferences: PreferencePool,
    learn_steps: usize,
    last_lambda: f64,
    exec: Execution,
}

impl EnvelopeAgent {
    pub fn new<R: Rng + ?Sized>(
        cfg: AgentConfig,
        env_cfg: EnvelopeConfig,
        obs_dim: usize,
        n_actions: usize,
        exec: Execution,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.network_spec(obs_dim + N_OBJECTIVES, n_actions * N_OBJECTIVES);
        let online = Mlp::new(spec, rng)?;
        Self::from_network(cfg, env_cfg, online, exec)
    }

    pub fn from_network(cfg: AgentConfig, env_cfg: EnvelopeConfig, online: Mlp, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        let out = online.spec().output_dim;
        if out % N_OBJECTIVES != 0 {
            return Err(Error::SpecMismatch(format!(
                "envelope network output {out} is not a multiple of {N_OBJECTIVES}"
            )));
        }
        Ok(Self {
            optimizer: Optimizer::new(cfg.optimizer.clone(), &online),
            pool: TransitionPool::new(cfg.pool_capacity)?,
            preferences: PreferencePool::new(env_cfg.preference_history),
            target: online.clone(),
            n_actions: out / N_OBJECTIVES,
            online,
            cfg,
            env_cfg,
            learn_steps: 0,
            last_lambda: 0.0,
            exec,
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn learn_steps(&self) -> usize {
        self.learn_steps
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// λ used by the most recent training step.
    pub fn last_lambda(&self) -> f64 {
        self.last_lambda
    }

    pub fn preferences(&self) -> &PreferencePool {
        &self.preferences
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], omega: &PreferenceVector, epsilon: f64, rng: &mut R) -> Result<usize> {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.n_actions));
        }
        Ok(select_action(&self.online.vector_q(state, omega)?, omega))
    }

    pub fn remember(&mut self, t: Transition) {
        self.pool.push(t);
    }

    /// One gradient step on a batch cross-sampled with `n_omega` fresh
    /// preferences. `fraction` is the training progress in [0, 1] that sets λ.
    pub fn train_step<R: Rng + ?Sized>(&mut self, fraction: f64, rng: &mut R) -> Result<Option<f64>> {
        let n = self.cfg.batch_size;
        if self.pool.len() < n.max(self.cfg.learn_start) {
            return Ok(None);
        }
        let batch = self.pool.sample(n, rng)?;
        let w = self.preferences.sample(self.env_cfg.n_omega, rng);
        let lambda = self.env_cfg.lambda.value(fraction);
        let gamma = self.cfg.gamma;
        let (online, target) = (&self.online, &self.target);
        let selector = match self.env_cfg.selection {
            TargetSelection::Target => target,
            TargetSelection::Online => online,
        };

        let per_transition = self.exec.map(batch.len(), |z| -> Result<Vec<Row>> {
            let t = batch[z];
            let r = t.reward.as_array();
            if t.terminal {
                return Ok(vec![r; w.len()]);
            }
            let eval = w
                .iter()
                .map(|om| target.vector_q(&t.next_state, om))
                .collect::<Result<Vec<_>>>()?;
            let sel = if std::ptr::eq(selector, target) {
                eval.clone()
            } else {
                w.iter()
                    .map(|om| selector.vector_q(&t.next_state, om))
                    .collect::<Result<Vec<_>>>()?
            };
            Ok(w
                .iter()
                .map(|om| envelope_target_from_rows(r, false, gamma, om, &sel, &eval))
                .collect())
        });
        let mut targets = Vec::with_capacity(n * w.len());
        let mut inputs = Vec::with_capacity(n * w.len());
        let mut actions = Vec::with_capacity(n * w.len());
        let mut omegas = Vec::with_capacity(n * w.len());
        for (t, ys) in batch.iter().zip(per_transition) {
            for (om, y) in w.iter().zip(ys?) {
                targets.push(y);
                inputs.push(conditioned_input(&t.state, om));
                actions.push(t.action);
                omegas.push(*om);
            }
        }

        let (loss, mut grads) = self.online.batch_gradient(&inputs, self.exec, |i, out| {
            let a = actions[i];
            let q = [out[a * N_OBJECTIVES], out[a * N_OBJECTIVES + 1]];
            let (l, g) = sample_loss(&targets[i], &q, &omegas[i], lambda);
            let mut full = vec![0.0; out.len()];
            full[a * N_OBJECTIVES] = g[0];
            full[a * N_OBJECTIVES + 1] = g[1];
            (l, full)
        })?;
        let scale = 1.0 / inputs.len() as f64;
        grads.scale(scale);
        self.optimizer.step(&mut self.online, &grads)?;
        self.learn_steps += 1;
        self.last_lambda = lambda;
        if self.learn_steps % self.cfg.target_period == 0 {
            clone_into(&self.online, &mut self.target)?;
        }
        Ok(Some(loss * scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::OptimizerConfig;
    use crate::objectives::RewardVector;
    use crate::scalar::ddqn_target;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pref(w: f64) -> PreferenceVector {
        PreferenceVector::from_tran_weight(w).unwrap()
    }

    #[test]
    fn projection_extremes() {
        let rows = vec![[1.0, 9.0], [3.0, 0.0], [2.0, 5.0]];
        assert_eq!(select_action(&rows, &pref(1.0)), 1);
        assert_eq!(select_action(&rows, &pref(0.0)), 0);
        assert_eq!(select_action(&[[1.0, 1.0]; 15], &pref(0.3)), 0);
    }

    #[test]
    fn selection_matches_scan_and_ignores_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let rows: Vec<Row> = (0..15).map(|_| [rng.random(), rng.random()]).collect();
            let om = pref(rng.random());
            let a = select_action(&rows, &om);
            for q in &rows {
                assert!(om.dot(&rows[a]) >= om.dot(q));
            }
            let scaled: Vec<Row> = rows.iter().map(|q| [q[0] * 3.5, q[1] * 3.5]).collect();
            assert_eq!(select_action(&scaled, &om), a);
        }
    }

    #[test]
    fn zero_discount_and_terminal_give_reward() {
        let rows = vec![vec![[5.0, 5.0], [1.0, 2.0]]];
        let r = [0.25, 0.5];
        assert_eq!(envelope_target_from_rows(r, false, 0.0, &pref(0.5), &rows, &rows), r);
        assert_eq!(envelope_target_from_rows(r, true, 0.9, &pref(0.5), &rows, &rows), r);
    }

    #[test]
    fn target_matches_brute_force_over_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let tables: Vec<Vec<Row>> = (0..2)
                .map(|_| (0..3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect())
                .collect();
            let om = pref(rng.random());
            let r = [rng.random(), rng.random()];
            let y = envelope_target_from_rows(r, false, 0.9, &om, &tables, &tables);
            let best = tables
                .iter()
                .flatten()
                .map(|q| om.dot(q))
                .fold(f64::NEG_INFINITY, f64::max);
            let proj = om.dot(&y);
            assert!((proj - (om.dot(&r) + 0.9 * best)).abs() < 1e-12);
        }
    }

    #[test]
    fn collapsed_singleton_equals_ddqn() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let qe: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let qt: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let om = pref(rng.random_range(0.01..1.0));
            let r: f64 = rng.random();
            let sel = vec![qe.iter().map(|&v| [v, 0.0]).collect::<Vec<Row>>()];
            let eval = vec![qt.iter().map(|&v| [v, 0.0]).collect::<Vec<Row>>()];
            let y = envelope_target_from_rows([r, 0.0], false, 0.9, &om, &sel, &eval);
            assert_eq!(y[0].to_bits(), ddqn_target(r, false, 0.9, &qe, &qt).to_bits());
        }
    }

    #[test]
    fn loss_endpoints() {
        let y = vec![[1.0, 2.0], [0.0, 1.0]];
        let q = vec![[0.0, 0.0], [1.0, 1.0]];
        let om = vec![pref(0.5), pref(1.0)];
        let (l0, _) = envelope_loss(&y, &q, &om, 0.0).unwrap();
        assert!((l0 - (5.0 + 1.0) / 2.0).abs() < 1e-15);
        let (l1, _) = envelope_loss(&y, &q, &om, 1.0).unwrap();
        assert!((l1 - (1.5 + 1.0) / 2.0).abs() < 1e-15);
        let (lz, gz) = envelope_loss(&y, &y, &om, 0.3).unwrap();
        assert_eq!(lz, 0.0);
        assert!(gz.iter().flatten().all(|g| *g == 0.0));
        assert!(envelope_loss(&y, &q, &om, 1.5).is_err());
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let y = vec![[1.0, 2.0], [0.0, 1.0]];
        let q = vec![[0.3, -0.2], [1.4, 0.9]];
        let om = vec![pref(0.3), pref(0.8)];
        let lambda = 0.4;
        let (_, g) = envelope_loss(&y, &q, &om, lambda).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for k in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i][k] += h;
                qm[i][k] -= h;
                let fd = (envelope_loss(&y, &qp, &om, lambda).unwrap().0 - envelope_loss(&y, &qm, &om, lambda).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[i][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn lambda_schedules_are_monotone_paths() {
        for s in [LambdaSchedule::Linear, LambdaSchedule::Cosine] {
            assert_eq!(s.value(0.0), 0.0);
            assert!((s.value(1.0) - 1.0).abs() < 1e-15);
            let mut prev = 0.0;
            for i in 0..=100 {
                let v = s.value(i as f64 / 100.0);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    fn agent(seed: u64) -> (EnvelopeAgent, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = AgentConfig {
            batch_size: 8,
            learn_start: 8,
            target_period: 5,
            pool_capacity: 100,
            hidden: vec![16],
            optimizer: OptimizerConfig::sgd(0.01),
            ..AgentConfig::default()
        };
        let mut a = EnvelopeAgent::new(cfg, EnvelopeConfig::default(), 2, 3, Execution::Sequential, &mut rng).unwrap();
        for i in 0..20 {
            a.remember(Transition {
                state: vec![(i % 2) as f64, 1.0],
                action: i % 3,
                reward: RewardVector::new(0.1 * i as f64, 0.05),
                next_state: vec![((i + 1) % 2) as f64, 1.0],
                terminal: i % 5 == 4,
            });
        }
        (a, rng)
    }

    #[test]
    fn training_is_reproducible() {
        let (mut a, mut ra) = agent(1);
        let (mut b, mut rb) = agent(1);
        for step in 0..10 {
            let la = a.train_step(step as f64 / 9.0, &mut ra).unwrap().unwrap();
            let lb = b.train_step(step as f64 / 9.0, &mut rb).unwrap().unwrap();
            assert_eq!(la.to_bits(), lb.to_bits());
            assert!(la >= 0.0);
        }
        assert_eq!(a.last_lambda(), 1.0);
        assert_eq!(a.online().params_flat(), b.online().params_flat());
    }
}
