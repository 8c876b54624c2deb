//! Experiment configuration: named presets overlaid with TOML files and
//! `key.path=value` overrides. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::channel::RadioConfig;
use crate::env::{EnvConfig, InstanceConfig, RewardConfig, Scenario};
use crate::envelope::EnvelopeConfig;
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::traffic::TrafficConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MoDqn,
    MoDdqn,
    MoDdqnEnvelope,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MoDqn => "mo_dqn",
            Algorithm::MoDdqn => "mo_ddqn",
            Algorithm::MoDdqnEnvelope => "mo_ddqn_envelope",
        }
    }

    pub fn is_envelope(self) -> bool {
        self == Algorithm::MoDdqnEnvelope
    }
}

/// Per-objective multipliers applied to rewards before they reach the
/// learner. Logged metrics always use the raw rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardScale {
    pub tran: f64,
    pub tele: f64,
}

impl Default for RewardScale {
    fn default() -> Self {
        Self { tran: 1.0, tele: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of the preset this configuration was built on.
    pub preset: String,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub seed: u64,
    /// Checkpoint every this many episodes; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    /// Transportation weight of the default evaluation preference.
    pub eval_omega_tran: f64,
    pub execution: Execution,
    pub learner_reward_scale: RewardScale,
    pub instance: InstanceConfig,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub reward: RewardConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub envelope: EnvelopeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "full".into(),
            algorithm: Algorithm::MoDdqnEnvelope,
            episodes: 4000,
            seed: 0,
            checkpoint_every: 0,
            eval_episodes: 500,
            eval_omega_tran: 0.5,
            execution: Execution::Parallel,
            learner_reward_scale: RewardScale::default(),
            instance: InstanceConfig::default(),
            traffic: TrafficConfig::default(),
            radio: RadioConfig::default(),
            reward: RewardConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            envelope: EnvelopeConfig::default(),
        }
    }
}

pub const DEFAULT_PRESET: &str = "desk";

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<&'static str> {
    let mut names = vec!["desk", "full"];
    names.extend(InstanceConfig::PRESETS);
    names
}

/// Built-in configurations: `full` (full-size defaults), `desk` (small
/// scale for a laptop) and one per named test instance.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "full" => Some(ExperimentConfig::default()),
        "desk" => {
            let mut cfg = ExperimentConfig {
                preset: "desk".into(),
                episodes: 300,
                eval_episodes: 100,
                learner_reward_scale: RewardScale { tran: 1.0, tele: 1e-3 },
                ..ExperimentConfig::default()
            };
            cfg.instance = InstanceConfig {
                v_min_mps: 20.0,
                v_max_mps: 30.0,
                n_rbs: 2,
                n_tbs: 5,
                n_targets: 2,
                n_surrounding: 5,
            };
            cfg.traffic.road_length_m = 300.0;
            cfg.env.spawn_window_m = 300.0;
            cfg.env.observe_surrounding = 3;
            cfg.agent.hidden = vec![64, 64];
            cfg.agent.pool_capacity = 100_000;
            cfg.agent.optimizer.learning_rate = 1e-3;
            Some(cfg)
        }
        other => InstanceConfig::preset(other).map(|instance| ExperimentConfig {
            preset: other.into(),
            instance,
            ..ExperimentConfig::default()
        }),
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `key.path=value`; the value is read as a TOML literal, falling back
/// to a plain string.
pub fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{text}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::config(format!("override `{text}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((path, value))
}

fn apply_override(root: &mut toml::Value, path: &[String], value: toml::Value) -> Result<()> {
    let mut node = root;
    for (depth, key) in path.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override path `{}` crosses a non-table", path.join("."))))?;
        if depth + 1 == path.len() {
            table.insert(key.clone(), value);
            return Ok(());
        }
        node = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Builds a configuration from TOML text. The `preset` key (default
    /// `desk`) selects the base; the remaining keys and then `overrides`
    /// are layered on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: toml::Value = toml::from_str::<toml::Table>(text)
            .map(toml::Value::Table)
            .map_err(|e| Error::config(format!("invalid TOML: {e}")))?;
        let parsed: Vec<(Vec<String>, toml::Value)> =
            overrides.iter().map(|o| parse_override(o)).collect::<Result<_>>()?;
        for (path, value) in &parsed {
            if path.len() == 1 && path[0] == "preset" {
                apply_override(&mut user, path, value.clone())?;
            }
        }
        let preset_name = match user.get("preset") {
            None => DEFAULT_PRESET.to_owned(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::config("`preset` must be a string")),
        };
        let base = preset(&preset_name).ok_or_else(|| {
            Error::config(format!(
                "unknown preset `{preset_name}`; known presets: {}",
                preset_names().join(", ")
            ))
        })?;
        let mut value =
            toml::Value::try_from(&base).map_err(|e| Error::config(format!("cannot serialize preset: {e}")))?;
        merge(&mut value, user);
        for (path, v) in parsed {
            apply_override(&mut value, &path, v)?;
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            instance: self.instance.clone(),
            traffic: self.traffic.clone(),
            radio: self.radio.clone(),
            reward: self.reward.clone(),
            env: self.env.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.eval_omega_tran) {
            return Err(Error::config("eval_omega_tran must lie in [0, 1]"));
        }
        let s = &self.learner_reward_scale;
        if !(s.tran.is_finite() && s.tran > 0.0 && s.tele.is_finite() && s.tele > 0.0) {
            return Err(Error::config("learner_reward_scale entries must be finite and > 0"));
        }
        self.scenario().validate()?;
        self.agent.validate()?;
        self.envelope.validate()
    }
}
