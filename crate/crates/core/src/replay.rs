//! Transition pool and preference sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{PreferenceVector, RewardVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: RewardVector,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct TransitionPool {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl TransitionPool {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("transition pool capacity must be >= 1"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Stores a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Uniform indices, drawn with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        if self.items.is_empty() {
            return Err(Error::Empty("transition pool"));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

/// Uniform sampler over the preference simplex, with an optional ring of the
/// most recently emitted preferences.
#[derive(Debug, Clone, Default)]
pub struct PreferencePool {
    history_len: usize,
    history: VecDeque<PreferenceVector>,
}

impl PreferencePool {
    pub fn new(history_len: usize) -> Self {
        Self {
            history_len,
            history: VecDeque::with_capacity(history_len),
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &PreferenceVector> {
        self.history.iter()
    }

    /// Draws `n` preferences `[u, 1 - u]` with `u ~ U(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Vec<PreferenceVector> {
        let out: Vec<_> = (0..n).map(|_| sample_preference(rng)).collect();
        if self.history_len > 0 {
            for w in &out {
                if self.history.len() == self.history_len {
                    self.history.pop_front();
                }
                self.history.push_back(*w);
            }
        }
        out
    }
}

pub fn sample_preference<R: Rng + ?Sized>(rng: &mut R) -> PreferenceVector {
    let u: f64 = rng.random();
    PreferenceVector::from_tran_weight(u).expect("u lies in [0, 1)")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: usize) -> Transition {
        Transition {
            state: vec![tag as f64],
            action: tag % 15,
            reward: RewardVector::new(tag as f64, 0.0),
            next_state: vec![tag as f64 + 1.0],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut pool = TransitionPool::new(3).unwrap();
        for i in 0..4 {
            pool.push(tr(i));
        }
        assert_eq!(pool.len(), 3);
        let tags: Vec<f64> = (0..3).map(|i| pool.get(i).unwrap().state[0]).collect();
        assert_eq!(tags, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_item_pool_returns_it() {
        let mut pool = TransitionPool::new(10).unwrap();
        pool.push(tr(5));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = pool.sample(4, &mut rng).unwrap();
        assert!(got.iter().all(|t| **t == tr(5)));
    }

    #[test]
    fn empty_and_zero_requests() {
        let pool = TransitionPool::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(pool.sample(0, &mut rng).unwrap().is_empty());
        assert!(matches!(pool.sample(1, &mut rng), Err(Error::Empty(_))));
        assert!(TransitionPool::new(0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut pool = TransitionPool::new(50).unwrap();
        for i in 0..50 {
            pool.push(tr(i));
        }
        let a = pool.sample_indices(20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = pool.sample_indices(20, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn preference_history_ring() {
        let mut pool = PreferencePool::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let drawn = pool.sample(5, &mut rng);
        let hist: Vec<_> = pool.history().copied().collect();
        assert_eq!(hist, drawn[2..].to_vec());
        assert_eq!(pool.sample(1, &mut rng).len(), 1);
    }
}
