use std::path::Path;

use rand::Rng;

use super::heads::HeadLayout;
use super::replay::{NextSelection, ReplayBuffer, Transition};
use super::{exploration_stream, restore, Algorithm, AgentParams, Controller, ControllerSpec, EpsilonSchedule};
use crate::env::{random_valid_action, ActionVector, EnvState, SlotEvaluation};
use crate::error::{Error, Result};
use crate::neural::{save_checkpoint, Mlp, ParameterSet};
use crate::rng::{self, SimRng};
use crate::scalar::Scalar;

/// Bootstrap value of the next state under the target network's outputs.
pub fn next_value<T: Scalar>(layout: &HeadLayout, values: &[T], next: &NextSelection) -> T {
    match next {
        NextSelection::GreedyMax { fovs } => {
            let greedy = layout.greedy(values, fovs);
            HeadLayout::joint_value(values, &layout.selected(&greedy))
        }
        NextSelection::Given(indices) => HeadLayout::joint_value(values, indices),
    }
}

/// Batch-mean squared TD error and its gradient w.r.t. the online network.
/// The target network only supplies constants.
pub fn dqn_loss_and_grad<T: Scalar>(
    online: &Mlp<T>,
    target: &Mlp<T>,
    layout: &HeadLayout,
    batch: &[&Transition<T>],
    gamma: T,
) -> Result<(T, ParameterSet<T>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty DQN minibatch".into()));
    }
    let n = T::lit(batch.len() as f64);
    let mut grads = online.params.zeros_like();
    let mut loss = T::zero();
    let mut upstream = vec![T::zero(); online.output_size()];
    for t in batch {
        let (q, cache) = online.forward(&t.state)?;
        let q_sa = HeadLayout::joint_value(&q, &t.selected);
        let y = if t.terminal {
            t.reward
        } else {
            t.reward + gamma * next_value(layout, &target.predict(&t.next_state)?, &t.next)
        };
        let d = q_sa - y;
        loss += d * d;
        upstream.iter_mut().for_each(|u| *u = T::zero());
        for i in &t.selected {
            upstream[*i] += T::lit(2.0) * d / n;
        }
        online.backward_into(&cache, &upstream, &mut grads)?;
    }
    Ok((loss / n, grads))
}

/// Online/target networks, replay memory and the update schedule.
#[derive(Debug, Clone)]
pub struct DqnLearner<T> {
    pub online: Mlp<T>,
    pub target: Mlp<T>,
    layout: HeadLayout,
    buffer: ReplayBuffer<Transition<T>>,
    replay_rng: SimRng,
    learning_rate: T,
    gamma: T,
    batch_size: usize,
    target_period: usize,
    steps: usize,
    last_loss: Option<T>,
}

impl<T: Scalar> DqnLearner<T> {
    pub fn new(sizes: &[usize], layout: HeadLayout, params: &AgentParams, init: &mut SimRng, replay_rng: SimRng) -> Result<Self> {
        let online = Mlp::new(sizes, init)?;
        Ok(Self {
            target: online.clone(),
            online,
            layout,
            buffer: ReplayBuffer::new(params.replay_capacity)?,
            replay_rng,
            learning_rate: T::lit(params.dqn_learning_rate),
            gamma: T::lit(params.gamma),
            batch_size: params.batch_size,
            target_period: params.target_period,
            steps: 0,
            last_loss: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<T>> {
        &self.buffer
    }

    pub fn last_loss(&self) -> Option<T> {
        self.last_loss
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.params.copy_from(&self.online.params)
    }

    /// One SGD step on a minibatch sampled from replay.
    pub fn update(&mut self) -> Result<T> {
        let batch = self.buffer.sample(self.batch_size, &mut self.replay_rng)?;
        let (loss, grads) = dqn_loss_and_grad(&self.online, &self.target, &self.layout, &batch, self.gamma)?;
        self.online.params.sgd_step(&grads, self.learning_rate)?;
        self.last_loss = Some(loss);
        Ok(loss)
    }

    /// Counts one environment step: stores `transition` if any, updates once
    /// replay holds a full batch, and syncs the target every period.
    pub fn record(&mut self, transition: Option<Transition<T>>) -> Result<()> {
        if let Some(t) = transition {
            self.buffer.push(t);
        }
        if self.buffer.len() >= self.batch_size {
            self.update()?;
        }
        self.steps += 1;
        if self.steps.is_multiple_of(self.target_period) {
            self.sync_target()?;
        }
        Ok(())
    }
}

pub(super) fn explore<R: Rng + ?Sized>(rng: &mut R, epsilon: f64) -> bool {
    rng.random::<f64>() < epsilon
}

#[derive(Debug, Clone)]
pub struct CentralizedDqn<T> {
    pub learner: DqnLearner<T>,
    layout: HeadLayout,
    exploration: SimRng,
    schedule: EpsilonSchedule,
    step: usize,
    reward_scale: f64,
}

impl<T: Scalar> CentralizedDqn<T> {
    pub fn new(params: &AgentParams, spec: &ControllerSpec) -> Result<Self> {
        params.validate()?;
        let layout = spec.layout();
        let sizes = params.layer_sizes(spec.global_features, layout.outputs());
        let mut init = rng::indexed_stream(spec.seed, rng::AGENT_INIT, 0);
        let replay = rng::indexed_stream(spec.seed, rng::REPLAY, 0);
        Ok(Self {
            learner: DqnLearner::new(&sizes, layout, params, &mut init, replay)?,
            layout,
            exploration: exploration_stream(spec.seed),
            schedule: EpsilonSchedule::new(params, spec.total_steps),
            step: 0,
            reward_scale: spec.reward_scale,
        })
    }

    pub fn q_values(&self, state: &EnvState) -> Result<Vec<T>> {
        self.learner.online.predict(&state.global_features())
    }
}

impl<T: Scalar> Controller for CentralizedDqn<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Cdqn
    }

    fn act(&mut self, state: &EnvState, explore_now: bool) -> Result<ActionVector> {
        if explore_now && explore(&mut self.exploration, self.schedule.value(self.step)) {
            return Ok(random_valid_action(
                &state.fovs,
                self.layout.mecs,
                self.layout.n_fov,
                self.layout.migration,
                &mut self.exploration,
            ));
        }
        Ok(self.layout.greedy(&self.q_values(state)?, &state.fovs))
    }

    fn observe(
        &mut self,
        state: &EnvState,
        action: &ActionVector,
        outcome: &SlotEvaluation,
        next_state: &EnvState,
        terminal: bool,
    ) -> Result<()> {
        let t = Transition {
            state: state.global_features(),
            selected: self.layout.selected(action),
            reward: T::lit(outcome.reward / self.reward_scale),
            next_state: next_state.global_features(),
            next: NextSelection::GreedyMax {
                fovs: next_state.fovs.clone(),
            },
            terminal,
        };
        self.learner.record(Some(t))?;
        self.step += 1;
        Ok(())
    }

    fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&self.learner.online.params, &dir.join("cdqn_online.bin"))?;
        save_checkpoint(&self.learner.target.params, &dir.join("cdqn_target.bin"))
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        restore(&mut self.learner.online.params, &dir.join("cdqn_online.bin"))?;
        restore(&mut self.learner.target.params, &dir.join("cdqn_target.bin"))
    }
}
