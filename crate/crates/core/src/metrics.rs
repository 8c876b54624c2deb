//! Per-episode metrics, summaries and CSV I/O.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Error, Result};
use crate::objectives::RewardVector;

/// Bumped whenever a CSV column is added, removed or renamed.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    /// Discounted transportation return averaged over target vehicles.
    pub r_tran: f64,
    /// Discounted telecommunication return averaged over target vehicles.
    pub r_tele: f64,
    pub delta_e: f64,
    pub xi_e: f64,
    /// Transportation weight of the conditioning preference, if any.
    pub omega_tran: Option<f64>,
    pub steps: usize,
}

/// `1 - T_e / T_hl`.
pub fn collision_rate(steps: usize, horizon: usize) -> f64 {
    1.0 - steps as f64 / horizon as f64
}

/// Accumulates discounted per-vehicle returns over one episode.
#[derive(Debug, Clone)]
pub struct EpisodeTracker {
    gamma: f64,
    discount: f64,
    sums: Vec<[f64; 2]>,
}

impl EpisodeTracker {
    pub fn new(n_targets: usize, gamma: f64) -> Self {
        Self {
            gamma,
            discount: 1.0,
            sums: vec![[0.0; 2]; n_targets],
        }
    }

    pub fn add(&mut self, rewards: &[RewardVector]) {
        for (s, r) in self.sums.iter_mut().zip(rewards) {
            s[0] += self.discount * r.tran;
            s[1] += self.discount * r.tele;
        }
        self.discount *= self.gamma;
    }

    pub fn returns(&self) -> &[[f64; 2]] {
        &self.sums
    }

    /// Closes the episode against the final environment state.
    pub fn finish(&self, episode: usize, env: &Env, omega_tran: Option<f64>) -> MetricsRecord {
        let n = self.sums.len() as f64;
        let steps = env.steps();
        MetricsRecord {
            episode,
            r_tran: self.sums.iter().map(|s| s[0]).sum::<f64>() / n,
            r_tele: self.sums.iter().map(|s| s[1]).sum::<f64>() / n,
            delta_e: collision_rate(steps, env.scenario().env.horizon_steps),
            xi_e: (0..env.n_targets()).map(|j| env.ho_probability(j)).sum::<f64>() / n,
            omega_tran,
            steps,
        }
    }
}

/// Means of every metric over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub omega_tran: Option<f64>,
    pub r_tran: f64,
    pub r_tele: f64,
    pub delta_e: f64,
    pub xi_e: f64,
}

pub fn summarize(records: &[MetricsRecord], omega_tran: Option<f64>) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("metrics records"));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        episodes: records.len(),
        omega_tran,
        r_tran: mean(|r| r.r_tran),
        r_tele: mean(|r| r.r_tele),
        delta_e: mean(|r| r.delta_e),
        xi_e: mean(|r| r.xi_e),
    })
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One row of a return-point file consumed by the pareto command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRow {
    pub label: String,
    pub r_tran: f64,
    pub r_tele: f64,
}
