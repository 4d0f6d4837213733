use std::path::Path;

use rand::Rng;

use super::heads::HeadLayout;
use super::{exploration_stream, restore, Algorithm, AgentParams, Controller, ControllerSpec};
use crate::env::{serving_sets, ActionVector, EnvState, SlotEvaluation};
use crate::error::{Error, Result};
use crate::neural::{argmax, log_softmax, save_checkpoint, softmax, Mlp, ParameterSet};
use crate::rng::{self, SimRng};
use crate::scalar::Scalar;

/// `log pi(action | state)` of the factorized policy and its gradient w.r.t.
/// the actor's logits. Rendering heads are restricted to the MECs serving the
/// FoV in `action`.
pub fn log_policy<T: Scalar>(layout: &HeadLayout, logits: &[T], action: &ActionVector, fovs: &[usize]) -> Result<(T, Vec<T>)> {
    if logits.len() != layout.outputs() {
        return Err(Error::ShapeMismatch("actor output does not match the head layout".into()));
    }
    let mut grad = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    let mut head = |indices: &[usize], chosen: usize, grad: &mut Vec<T>| {
        let sub: Vec<T> = indices.iter().map(|i| logits[*i]).collect();
        let logp = log_softmax(&sub);
        total += logp[chosen];
        for (j, i) in indices.iter().enumerate() {
            let p = logp[j].exp();
            grad[*i] = if j == chosen { T::one() - p } else { -p };
        }
    };
    for (k, b) in action.serving.iter().enumerate() {
        let indices: Vec<usize> = (0..layout.mecs).map(|m| layout.serve(k, m)).collect();
        head(&indices, *b, &mut grad);
    }
    if layout.migration {
        for (q, set) in serving_sets(&action.serving, fovs, layout.n_fov).iter().enumerate() {
            let Some(r) = action.rendering[q] else { continue };
            let chosen = set
                .iter()
                .position(|b| *b == r)
                .ok_or_else(|| Error::InvalidAction(format!("rendering MEC {r} does not serve FoV {q}")))?;
            let indices: Vec<usize> = set.iter().map(|b| layout.render(q, *b)).collect();
            head(&indices, chosen, &mut grad);
        }
    }
    Ok((total, grad))
}

/// State value and its parameter gradient.
pub fn critic_gradient<T: Scalar>(critic: &Mlp<T>, features: &[T]) -> Result<(T, ParameterSet<T>)> {
    let (v, cache) = critic.forward(features)?;
    Ok((v[0], critic.backward(&cache, &[T::one()])?))
}

pub(super) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone)]
pub struct CentralizedAc<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    layout: HeadLayout,
    policy_rng: SimRng,
    actor_lr: T,
    critic_lr: T,
    gamma: T,
    reward_scale: f64,
    last_td: Option<T>,
}

impl<T: Scalar> CentralizedAc<T> {
    pub fn new(params: &AgentParams, spec: &ControllerSpec) -> Result<Self> {
        params.validate()?;
        let layout = spec.layout();
        let mut init = rng::indexed_stream(spec.seed, rng::AGENT_INIT, 0);
        Ok(Self {
            actor: Mlp::new(&params.layer_sizes(spec.global_features, layout.outputs()), &mut init)?,
            critic: Mlp::new(&params.layer_sizes(spec.global_features, 1), &mut init)?,
            layout,
            policy_rng: exploration_stream(spec.seed),
            actor_lr: T::lit(params.actor_learning_rate),
            critic_lr: T::lit(params.critic_learning_rate),
            gamma: T::lit(params.gamma),
            reward_scale: spec.reward_scale,
            last_td: None,
        })
    }

    pub fn last_td_error(&self) -> Option<T> {
        self.last_td
    }

    /// Per-head probabilities; sampled when `sample`, modes otherwise.
    fn choose(&mut self, logits: &[T], fovs: &[usize], sample: bool) -> ActionVector {
        let l = self.layout;
        let pick = |vals: Vec<T>, rng: &mut SimRng| {
            if sample {
                sample_categorical(&softmax(&vals), rng)
            } else {
                argmax(&vals)
            }
        };
        let serving: Vec<usize> = (0..l.users)
            .map(|k| pick((0..l.mecs).map(|b| logits[l.serve(k, b)]).collect(), &mut self.policy_rng))
            .collect();
        let mut rendering = vec![None; l.n_fov];
        if l.migration {
            for (q, set) in serving_sets(&serving, fovs, l.n_fov).iter().enumerate() {
                if !set.is_empty() {
                    let vals = set.iter().map(|b| logits[l.render(q, *b)]).collect();
                    rendering[q] = Some(set[pick(vals, &mut self.policy_rng)]);
                }
            }
        }
        ActionVector { serving, rendering }
    }

    /// One TD(0) actor-critic step; returns the TD error.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        features: &[T],
        action: &ActionVector,
        fovs: &[usize],
        reward: T,
        next_features: &[T],
        terminal: bool,
    ) -> Result<T> {
        let (v, grad_v) = critic_gradient(&self.critic, features)?;
        let v_next = if terminal { T::zero() } else { self.critic.predict(next_features)?[0] };
        let td = reward + self.gamma * v_next - v;
        let (logits, cache) = self.actor.forward(features)?;
        let (_, dlogits) = log_policy(&self.layout, &logits, action, fovs)?;
        let grad_pi = self.actor.backward(&cache, &dlogits)?;
        self.critic.params.add_scaled(&grad_v, self.critic_lr * td)?;
        self.actor.params.add_scaled(&grad_pi, self.actor_lr * td)?;
        self.last_td = Some(td);
        Ok(td)
    }
}

impl<T: Scalar> Controller for CentralizedAc<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Cac
    }

    fn act(&mut self, state: &EnvState, explore: bool) -> Result<ActionVector> {
        let logits = self.actor.predict(&state.global_features())?;
        Ok(self.choose(&logits, &state.fovs, explore))
    }

    fn observe(
        &mut self,
        state: &EnvState,
        action: &ActionVector,
        outcome: &SlotEvaluation,
        next_state: &EnvState,
        terminal: bool,
    ) -> Result<()> {
        let reward = T::lit(outcome.reward / self.reward_scale);
        self.update(
            &state.global_features(),
            action,
            &state.fovs,
            reward,
            &next_state.global_features(),
            terminal,
        )?;
        Ok(())
    }

    fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(&self.actor.params, &dir.join("cac_actor.bin"))?;
        save_checkpoint(&self.critic.params, &dir.join("cac_critic.bin"))
    }

    fn load(&mut self, dir: &Path) -> Result<()> {
        restore(&mut self.actor.params, &dir.join("cac_actor.bin"))?;
        restore(&mut self.critic.params, &dir.join("cac_critic.bin"))
    }
}
