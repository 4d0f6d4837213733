//! Association/rendering controllers: DQN and actor-critic, centralized and
//! per-MEC, plus the nearest-MEC baseline.

mod ac;
mod distributed;
mod dqn;
mod heads;
mod replay;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ac::{critic_gradient, log_policy, CentralizedAc};
pub use distributed::{DistributedAc, DistributedDqn};
pub use dqn::{dqn_loss_and_grad, next_value, CentralizedDqn, DqnLearner};
pub use heads::{HeadLayout, LocalLayout};
pub use replay::{NextSelection, ReplayBuffer, Transition};

use crate::env::{nearest_association, ActionVector, EnvState, SlotEvaluation};
use crate::error::{Error, Result};
use crate::model::NetworkTopology;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub hidden: Vec<usize>,
    pub dqn_learning_rate: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between target-network syncs.
    pub target_period: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training steps over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            dqn_learning_rate: 0.05,
            actor_learning_rate: 0.005,
            critic_learning_rate: 0.05,
            gamma: 0.9,
            replay_capacity: 10_000,
            batch_size: 64,
            target_period: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.6,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter("gamma must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.target_period == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::InvalidParameter(
                "need batch_size > 0, target_period > 0 and replay_capacity >= batch_size".into(),
            ));
        }
        let rates = [self.dqn_learning_rate, self.actor_learning_rate, self.critic_learning_rate];
        if rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidParameter("learning rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::InvalidParameter("epsilon values must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(output);
        sizes
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn new(params: &AgentParams, total_steps: usize) -> Self {
        Self {
            start: params.epsilon_start,
            end: params.epsilon_end,
            decay_steps: (total_steps as f64 * params.epsilon_decay_fraction).round() as usize,
        }
    }

    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cdqn,
    Ddqn,
    Cac,
    Dac,
    Nearest,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Cdqn,
        Algorithm::Ddqn,
        Algorithm::Cac,
        Algorithm::Dac,
        Algorithm::Nearest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cdqn => "cdqn",
            Algorithm::Ddqn => "ddqn",
            Algorithm::Cac => "cac",
            Algorithm::Dac => "dac",
            Algorithm::Nearest => "nearest",
        }
    }

    pub fn learns(self) -> bool {
        self != Algorithm::Nearest
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Environment-independent context every controller needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSpec {
    pub users: usize,
    pub mecs: usize,
    pub n_fov: usize,
    pub migration: bool,
    pub global_features: usize,
    pub local_features: usize,
    /// Divides rewards before learning; the largest possible slot reward.
    pub reward_scale: f64,
    pub total_steps: usize,
    pub seed: u64,
}

impl ControllerSpec {
    pub fn layout(&self) -> HeadLayout {
        HeadLayout {
            users: self.users,
            mecs: self.mecs,
            n_fov: self.n_fov,
            migration: self.migration,
        }
    }

    pub fn local_layout(&self) -> LocalLayout {
        LocalLayout {
            users: self.users,
            n_fov: self.n_fov,
            migration: self.migration,
        }
    }
}

pub trait Controller {
    fn algorithm(&self) -> Algorithm;

    /// Chooses an action; `explore` enables the behaviour policy.
    fn act(&mut self, state: &EnvState, explore: bool) -> Result<ActionVector>;

    /// Learns from one step. `terminal` marks the last slot of an episode.
    fn observe(
        &mut self,
        state: &EnvState,
        action: &ActionVector,
        outcome: &SlotEvaluation,
        next_state: &EnvState,
        terminal: bool,
    ) -> Result<()>;

    fn end_episode(&mut self) -> Result<()> {
        Ok(())
    }

    /// Writes network parameters under `dir`.
    fn save(&self, _dir: &Path) -> Result<()> {
        Ok(())
    }

    /// Restores parameters written by `save`.
    fn load(&mut self, _dir: &Path) -> Result<()> {
        Ok(())
    }
}

/// Overwrites `target` with the checkpoint at `path`, checking the layout.
pub(crate) fn restore<T: Scalar>(target: &mut crate::neural::ParameterSet<T>, path: &Path) -> Result<()> {
    let loaded = crate::neural::load_checkpoint::<T>(path)?;
    target.copy_from(&loaded)
}

/// Nearest-MEC association; never learns.
#[derive(Debug, Clone)]
pub struct NearestBaseline {
    topology: NetworkTopology<f64>,
    migration: bool,
}

impl NearestBaseline {
    pub fn new(topology: NetworkTopology<f64>, migration: bool) -> Self {
        Self { topology, migration }
    }
}

impl Controller for NearestBaseline {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Nearest
    }

    fn act(&mut self, state: &EnvState, _explore: bool) -> Result<ActionVector> {
        Ok(nearest_association(&self.topology, &state.fovs, state.n_fov, self.migration))
    }

    fn observe(&mut self, _: &EnvState, _: &ActionVector, _: &SlotEvaluation, _: &EnvState, _: bool) -> Result<()> {
        Ok(())
    }
}

/// Builds the controller for `algorithm` with scalar `T`.
pub fn build_controller<T: Scalar>(
    algorithm: Algorithm,
    params: &AgentParams,
    spec: &ControllerSpec,
    topology: &NetworkTopology<f64>,
) -> Result<Box<dyn Controller>> {
    params.validate()?;
    Ok(match algorithm {
        Algorithm::Cdqn => Box::new(CentralizedDqn::<T>::new(params, spec)?),
        Algorithm::Ddqn => Box::new(DistributedDqn::<T>::new(params, spec)?),
        Algorithm::Cac => Box::new(CentralizedAc::<T>::new(params, spec)?),
        Algorithm::Dac => Box::new(DistributedAc::<T>::new(params, spec)?),
        Algorithm::Nearest => Box::new(NearestBaseline::new(topology.clone(), spec.migration)),
    })
}

pub(crate) fn exploration_stream(seed: u64) -> rng::SimRng {
    rng::stream(seed, rng::EXPLORATION)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let s = EpsilonSchedule::new(&AgentParams::default(), 1000);
        assert_eq!(s.decay_steps, 600);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(300) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(600), 0.05);
        assert_eq!(s.value(10_000), 0.05);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sarsa".parse::<Algorithm>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(AgentParams::default().validate().is_ok());
        assert!(AgentParams { gamma: 1.0, ..AgentParams::default() }.validate().is_err());
        assert!(AgentParams { replay_capacity: 10, ..AgentParams::default() }.validate().is_err());
    }
}
