//! The two objectives: transportation (index 0) and telecommunication (index 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_OBJECTIVES: usize = 2;

/// Per-step reward of one target vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub tran: f64,
    pub tele: f64,
}

impl RewardVector {
    pub fn new(tran: f64, tele: f64) -> Self {
        Self { tran, tele }
    }

    pub fn as_array(&self) -> [f64; N_OBJECTIVES] {
        [self.tran, self.tele]
    }

    pub fn is_finite(&self) -> bool {
        self.tran.is_finite() && self.tele.is_finite()
    }
}

/// Non-negative weights over the objectives that sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector([f64; N_OBJECTIVES]);

const SIMPLEX_TOL: f64 = 1e-12;

impl PreferenceVector {
    pub fn new(tran: f64, tele: f64) -> Result<Self> {
        if !(tran.is_finite() && tele.is_finite() && tran >= 0.0 && tele >= 0.0) {
            return Err(Error::domain("preference weights must be finite and >= 0"));
        }
        if ((tran + tele) - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("preference weights sum to {}, not 1", tran + tele)));
        }
        Ok(Self([tran, tele]))
    }

    /// `[w, 1 - w]` for `w` in [0, 1].
    pub fn from_tran_weight(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::domain(format!("preference weight {w} outside [0, 1]")));
        }
        Self::new(w, 1.0 - w)
    }

    pub fn weights(&self) -> [f64; N_OBJECTIVES] {
        self.0
    }

    pub fn tran(&self) -> f64 {
        self.0[0]
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0[0] * v[0] + self.0[1] * v[1]
    }

    /// `n` evenly spaced preferences from `[0, 1]` to `[1, 0]`.
    pub fn sweep(n: usize) -> Vec<Self> {
        match n {
            0 => Vec::new(),
            1 => vec![Self([0.5, 0.5])],
            _ => (0..n)
                .map(|i| {
                    let w = i as f64 / (n - 1) as f64;
                    Self([w, 1.0 - w])
                })
                .collect(),
        }
    }
}
