//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 1
//! algorithm = "cdqn"        # cdqn | ddqn | cac | dac | nearest
//! scheme = "mec-migration"  # mec-no-migration | mec-migration | vr-device
//! prediction = true
//!
//! [run]
//! episodes = 100
//! slots_per_episode = 100
//!
//! [topology]
//! mecs = 8
//! ```
//!
//! Every section and key is optional and falls back to its default; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, Algorithm};
use crate::error::{Error, Result};
use crate::latency::Scheme;
use crate::mobility::MobilityParams;
use crate::model::{PhyParams, RenderingParams, TopologyParams};
use crate::predictor::PredictorParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub episodes: usize,
    pub slots_per_episode: usize,
    /// Greedy evaluation after training: `eval_episodes` fresh episodes of
    /// `eval_slots` slots each.
    pub eval_slots: usize,
    pub eval_episodes: usize,
    /// Reuse one channel realization for every slot.
    pub freeze_channels: bool,
    /// Fill the `wall_time` column; off by default so metrics stay
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            episodes: 100,
            slots_per_episode: 100,
            eval_slots: 100,
            eval_episodes: 10,
            freeze_channels: false,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub scheme: Scheme,
    pub prediction: bool,
    pub run: RunParams,
    pub topology: TopologyParams<f64>,
    pub phy: PhyParams<f64>,
    pub rendering: RenderingParams<f64>,
    pub mobility: MobilityParams<f64>,
    pub predictor: PredictorParams,
    pub agent: AgentParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            algorithm: Algorithm::Cdqn,
            scheme: Scheme::MecMigration,
            prediction: true,
            run: RunParams::default(),
            topology: TopologyParams::default(),
            phy: PhyParams::default(),
            rendering: RenderingParams::default(),
            mobility: MobilityParams::default(),
            predictor: PredictorParams::default(),
            agent: AgentParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses an already-loaded TOML tree (used by sweeps after editing a key).
    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.phy.validate()?;
        self.rendering.validate()?;
        self.mobility.grid()?;
        self.predictor.validate()?;
        self.agent.validate()?;
        if self.run.episodes == 0 || self.run.slots_per_episode == 0 || self.run.eval_slots == 0 || self.run.eval_episodes == 0 {
            return Err(Error::Config("episode and slot counts must be positive".into()));
        }
        if self.prediction && self.predictor.trace_slots <= self.predictor.window + 1 {
            return Err(Error::Config(format!(
                "predictor.trace_slots ({}) must exceed the window ({}) to train a predictor",
                self.predictor.trace_slots, self.predictor.window
            )));
        }
        Ok(())
    }

    pub fn migration(&self) -> bool {
        self.scheme == Scheme::MecMigration
    }

    pub fn total_steps(&self) -> usize {
        self.run.episodes * self.run.slots_per_episode
    }
}

/// Sets the dotted `key` (e.g. `rendering.uplink_latency`) in a TOML tree,
/// creating missing tables.
pub fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` crosses a non-table value")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` crosses a non-table value")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses a command-line value as TOML, falling back to a plain string.
pub fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}
