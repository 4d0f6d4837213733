//! One learner per MEC working on local observations and rewards, with
//! per-episode parameter averaging at a central controller.

use std::path::Path;

use rand::Rng;

use super::ac::critic_gradient;
use super::dqn::{explore, DqnLearner};
use super::heads::LocalLayout;
use super::replay::{NextSelection, Transition};
use super::{exploration_stream, restore, Algorithm, AgentParams, Controller, ControllerSpec, EpsilonSchedule};
use crate::env::{random_valid_action, serving_sets, ActionVector, EnvState, SlotEvaluation};
use crate::error::Result;
use crate::neural::{average_parameters, log_softmax, save_checkpoint, softmax, Mlp, ParameterSet};
use crate::rng::{self, SimRng};
use crate::scalar::Scalar;

/// Sum of PSNR over the users `mec` served.
fn local_reward(outcome: &SlotEvaluation, mec: usize) -> f64 {
    outcome.users.iter().filter(|u| u.serving == mec).map(|u| u.psnr).sum()
}

/// Mean of the selected sets, or `None` when nobody qualifies.
fn average_of<T: Scalar>(sets: Vec<&ParameterSet<T>>) -> Result<Option<ParameterSet<T>>> {
    if sets.is_empty() {
        return Ok(None);
    }
    Ok(Some(average_parameters(&sets)?))
}

#[derive(Debug, Clone)]
pub struct DistributedDqn<T> {
    pub agents: Vec<DqnLearner<T>>,
    local: LocalLayout,
    mecs: usize,
    exploration: SimRng,
    schedule: EpsilonSchedule,
    step: usize,
    reward_scale: f64,
    participated: Vec<bool>,
    central: Option<ParameterSet<T>>,
}

impl<T: Scalar> DistributedDqn<T> {
    pub fn new(params: &AgentParams, spec: &ControllerSpec) -> Result<Self> {
        params.validate()?;
        let local = spec.local_layout();
        let sizes = params.layer_sizes(spec.local_features, local.outputs());
        let agents = (0..spec.mecs)
            .map(|i| {
                let mut init = rng::indexed_stream(spec.seed, rng::AGENT_INIT, i);
                let replay = rng::indexed_stream(spec.seed, rng::REPLAY, i);
                DqnLearner::new(&sizes, spec.layout(), params, &mut init, replay)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            agents,
            local,
            mecs: spec.mecs,
            exploration: exploration_stream(spec.seed),
            schedule: EpsilonSchedule::new(params, spec.total_steps),
            step: 0,
            reward_scale: spec.reward_scale,
            participated: vec![false; spec.mecs],
            central: None,
        })
    }

    /// Latest averaged parameters, if a round has completed.
    pub fn central(&self) -> Option<&ParameterSet<T>> {
        self.central.as_ref()
    }

    fn greedy(&self, state: &EnvState) -> Result<ActionVector> {
        let scores = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.online.predict(&state.local_features(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.local.resolve(&scores, &state.fovs))
    }

    /// Averages the online networks of the MECs that served a user this
    /// round and hands the mean back to every agent.
    pub fn average_round(&mut self) -> Result<()> {
        let sets = self
            .agents
            .iter()
            .zip(&self.participated)
            .filter(|(_, p)| **p)
            .map(|(a, _)| &a.online.params)
            .collect();
        if let Some(mean) = average_of(sets)? {
            for a in &mut self.agents {
                a.online.params.copy_from(&mean)?;
            }
            self.central = Some(mean);
        }
        self.participated.iter_mut().for_each(|p| *p = false);
        Ok(())
    }
}

impl<T: Scalar> Controller for DistributedDqn<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ddqn
    }

    fn act(&mut self, state: &EnvState, explore_now: bool) -> Result<ActionVector> {
        if explore_now && explore(&mut self.exploration, self.schedule.value(self.step)) {
            return Ok(random_valid_action(
                &state.fovs,
                self.mecs,
                self.local.n_fov,
                self.local.migration,
                &mut self.exploration,
            ));
        }
        self.greedy(state)
    }

    fn observe(
        &mut self,
        state: &EnvState,
        action: &ActionVector,
        outcome: &SlotEvaluation,
        next_state: &EnvState,
        terminal: bool,
    ) -> Result<()> {
        let next_greedy = self.greedy(next_state)?;
        for i in 0..self.agents.len() {
            let selected = self.local.selected(action, i);
            let transition = (!selected.is_empty()).then(|| Transition {
                state: state.local_features(i),
                selected,
                reward: T::lit(local_reward(outcome, i) / self.reward_scale),
                next_state: next_state.local_features(i),
                next: NextSelection::Given(self.local.selected(&next_greedy, i)),
                terminal,
            });
            if action.serving.contains(&i) {
                self.participated[i] = true;
            }
            self.agents[i].record(transition)?;
        }
        self.step += 1;
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        self.average_round()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate() {
            save_checkpoint(&a.online.params, &dir.join(format!("ddqn_agent{i}.bin")))?;
        }
        Ok(())
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        for (i, a) in self.agents.iter_mut().enumerate() {
            restore(&mut a.online.params, &dir.join(format!("ddqn_agent{i}.bin")))?;
            a.sync_target()?;
        }
        Ok(())
    }
}

/// Per-MEC actor emitting a two-way claim/decline head for every user and
/// every FoV, and a local critic.
#[derive(Debug, Clone)]
pub struct ClaimAgent<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
}

#[derive(Debug, Clone)]
pub struct DistributedAc<T> {
    pub agents: Vec<ClaimAgent<T>>,
    local: LocalLayout,
    policy_rng: SimRng,
    actor_lr: T,
    critic_lr: T,
    gamma: T,
    reward_scale: f64,
    last_claims: Vec<Vec<bool>>,
    participated: Vec<bool>,
}

impl<T: Scalar> DistributedAc<T> {
    pub fn new(params: &AgentParams, spec: &ControllerSpec) -> Result<Self> {
        params.validate()?;
        let local = spec.local_layout();
        let agents = (0..spec.mecs)
            .map(|i| {
                let mut init = rng::indexed_stream(spec.seed, rng::AGENT_INIT, i);
                Ok(ClaimAgent {
                    actor: Mlp::new(&params.layer_sizes(spec.local_features, 2 * local.outputs()), &mut init)?,
                    critic: Mlp::new(&params.layer_sizes(spec.local_features, 1), &mut init)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            agents,
            local,
            policy_rng: exploration_stream(spec.seed),
            actor_lr: T::lit(params.actor_learning_rate),
            critic_lr: T::lit(params.critic_learning_rate),
            gamma: T::lit(params.gamma),
            reward_scale: spec.reward_scale,
            last_claims: Vec::new(),
            participated: vec![false; spec.mecs],
        })
    }

    fn claim_probabilities(&self, state: &EnvState) -> Result<Vec<Vec<T>>> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let logits = a.actor.predict(&state.local_features(i))?;
                Ok(logits.chunks_exact(2).map(|pair| softmax(pair)[0]).collect())
            })
            .collect()
    }

    /// Heads that took part in a decision: all user heads, plus the heads of
    /// requested FoVs under migration.
    fn active_heads(&self, fovs: &[usize]) -> Vec<usize> {
        let mut heads: Vec<usize> = (0..self.local.users).collect();
        if self.local.migration {
            for q in 0..self.local.n_fov {
                if fovs.contains(&q) {
                    heads.push(self.local.users + q);
                }
            }
        }
        heads
    }

    /// Averages the critics of the MECs that served a user this round.
    pub fn average_round(&mut self) -> Result<()> {
        let sets = self
            .agents
            .iter()
            .zip(&self.participated)
            .filter(|(_, p)| **p)
            .map(|(a, _)| &a.critic.params)
            .collect();
        if let Some(mean) = average_of(sets)? {
            for a in &mut self.agents {
                a.critic.params.copy_from(&mean)?;
            }
        }
        self.participated.iter_mut().for_each(|p| *p = false);
        Ok(())
    }
}

impl<T: Scalar> Controller for DistributedAc<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Dac
    }

    /// Every MEC claims or declines each head; a user (or FoV) goes to the
    /// claimant with the highest claim probability, or to the most eager MEC
    /// when nobody claims.
    fn act(&mut self, state: &EnvState, explore: bool) -> Result<ActionVector> {
        let probs = self.claim_probabilities(state)?;
        let claims: Vec<Vec<bool>> = probs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| {
                        if explore {
                            self.policy_rng.random::<f64>() < p.to_f64_lossy()
                        } else {
                            p.to_f64_lossy() >= 0.5
                        }
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<Vec<T>> = probs
            .iter()
            .zip(&claims)
            .map(|(row, c)| row.iter().zip(c).map(|(p, claim)| *p + if *claim { T::one() } else { T::zero() }).collect())
            .collect();
        self.last_claims = claims;
        Ok(self.local.resolve(&scores, &state.fovs))
    }

    fn observe(
        &mut self,
        state: &EnvState,
        action: &ActionVector,
        outcome: &SlotEvaluation,
        next_state: &EnvState,
        terminal: bool,
    ) -> Result<()> {
        let heads = self.active_heads(&state.fovs);
        let sets = serving_sets(&action.serving, &state.fovs, self.local.n_fov);
        for i in 0..self.agents.len() {
            let x = state.local_features(i);
            let x_next = next_state.local_features(i);
            let reward = T::lit(local_reward(outcome, i) / self.reward_scale);
            let agent = &mut self.agents[i];
            let (v, grad_v) = critic_gradient(&agent.critic, &x)?;
            let v_next = if terminal { T::zero() } else { agent.critic.predict(&x_next)?[0] };
            let td = reward + self.gamma * v_next - v;
            let (logits, cache) = agent.actor.forward(&x)?;
            let mut dlogits = vec![T::zero(); logits.len()];
            for &j in &heads {
                // a FoV head only mattered if this MEC was eligible to render it
                if j >= self.local.users && !sets[j - self.local.users].contains(&i) {
                    continue;
                }
                let claimed = self.last_claims.get(i).and_then(|c| c.get(j)).copied().unwrap_or(false);
                let chosen = if claimed { 0 } else { 1 };
                let logp = log_softmax(&logits[2 * j..2 * j + 2]);
                for c in 0..2 {
                    let p = logp[c].exp();
                    dlogits[2 * j + c] = if c == chosen { T::one() - p } else { -p };
                }
            }
            let grad_pi = agent.actor.backward(&cache, &dlogits)?;
            agent.critic.params.add_scaled(&grad_v, self.critic_lr * td)?;
            agent.actor.params.add_scaled(&grad_pi, self.actor_lr * td)?;
            if action.serving.contains(&i) {
                self.participated[i] = true;
            }
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        self.average_round()
    }

    fn save(&self, dir: &Path) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate() {
            save_checkpoint(&a.actor.params, &dir.join(format!("dac_actor{i}.bin")))?;
            save_checkpoint(&a.critic.params, &dir.join(format!("dac_critic{i}.bin")))?;
        }
        Ok(())
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        for (i, a) in self.agents.iter_mut().enumerate() {
            restore(&mut a.actor.params, &dir.join(format!("dac_actor{i}.bin")))?;
            restore(&mut a.critic.params, &dir.join(format!("dac_critic{i}.bin")))?;
        }
        Ok(())
    }
}
