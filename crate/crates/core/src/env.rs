//! Slot-by-slot environment: observations, action validation, grouping,
//! downlink/latency/QoE evaluation and rewards.

use std::io::Write;

use rand::Rng;

use crate::channel::{multicast_sinr, precode_groups, rate, sample_channel, unicast_sinr, ChannelRealization, LinkKind};
use crate::error::{Error, Result};
use crate::latency::{interaction_latency, on_time_psnr, psnr, LatencyBreakdown, LatencyInputs, Role, Scheme};
use crate::mobility::{step_eye, EyeState, FovGrid, MobilityParams};
use crate::model::{FovIndex, NetworkTopology, PhyParams, RenderingParams};
use crate::predictor::FovPredictor;
use crate::rng::SimRng;
use crate::scalar::Scalar;

/// Association and rendering decision for one slot.
///
/// `rendering[q]` names the MEC that renders FoV `q` under the migration
/// scheme; it is `None` for FoVs nobody requests and for every FoV under the
/// other schemes, where each serving MEC (or headset) renders for itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector {
    pub serving: Vec<usize>,
    pub rendering: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub mec: usize,
    pub fov: usize,
    pub members: Vec<usize>,
}

impl Group {
    pub fn kind(&self) -> LinkKind {
        if self.members.len() >= 2 {
            LinkKind::Multicast
        } else {
            LinkKind::Unicast
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    /// Sorted by (MEC, FoV).
    pub groups: Vec<Group>,
    pub inactive_mecs: Vec<usize>,
}

impl GroupAssignment {
    pub fn multicast_count(&self) -> usize {
        self.groups.iter().filter(|g| g.members.len() >= 2).count()
    }

    pub fn unicast_count(&self) -> usize {
        self.groups.iter().filter(|g| g.members.len() == 1).count()
    }

    /// Index of the group containing `user`.
    pub fn group_of(&self, user: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.members.contains(&user))
    }
}

/// Users sharing (FoV, serving MEC) form one group.
pub fn group_users(serving: &[usize], fovs: &[usize], mecs: usize) -> Result<GroupAssignment> {
    if serving.len() != fovs.len() {
        return Err(Error::ShapeMismatch("serving and FoV lists differ in length".into()));
    }
    if let Some(&b) = serving.iter().find(|&&b| b >= mecs) {
        return Err(Error::InvalidAction(format!("serving MEC {b} out of range for {mecs} MECs")));
    }
    let mut keys: Vec<(usize, usize)> = serving.iter().copied().zip(fovs.iter().copied()).collect();
    keys.sort_unstable();
    keys.dedup();
    let groups: Vec<Group> = keys
        .into_iter()
        .map(|(mec, fov)| Group {
            mec,
            fov,
            members: (0..serving.len())
                .filter(|&k| serving[k] == mec && fovs[k] == fov)
                .collect(),
        })
        .collect();
    let inactive_mecs = (0..mecs).filter(|b| !serving.contains(b)).collect();
    Ok(GroupAssignment { groups, inactive_mecs })
}

/// Distinct serving MECs (ascending) of the users requesting each FoV.
pub fn serving_sets(serving: &[usize], fovs: &[usize], n_fov: usize) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); n_fov];
    for (b, q) in serving.iter().zip(fovs) {
        if !sets[*q].contains(b) {
            sets[*q].push(*b);
        }
    }
    sets.iter_mut().for_each(|s| s.sort_unstable());
    sets
}

pub fn validate_action(action: &ActionVector, fovs: &[usize], mecs: usize, n_fov: usize, migration: bool) -> Result<()> {
    if action.serving.len() != fovs.len() {
        return Err(Error::InvalidAction(format!(
            "{} serving entries for {} users",
            action.serving.len(),
            fovs.len()
        )));
    }
    if action.rendering.len() != n_fov {
        return Err(Error::InvalidAction(format!(
            "{} rendering entries for {n_fov} FoVs",
            action.rendering.len()
        )));
    }
    if let Some(&b) = action.serving.iter().find(|&&b| b >= mecs) {
        return Err(Error::InvalidAction(format!("serving MEC {b} out of range")));
    }
    let sets = serving_sets(&action.serving, fovs, n_fov);
    for (q, (choice, set)) in action.rendering.iter().zip(&sets).enumerate() {
        match (migration, choice) {
            (false, None) => {}
            (false, Some(_)) => {
                return Err(Error::InvalidAction(format!(
                    "rendering MEC given for FoV {q} outside the migration scheme"
                )))
            }
            (true, None) if set.is_empty() => {}
            (true, None) => return Err(Error::InvalidAction(format!("FoV {q} is requested but has no rendering MEC"))),
            (true, Some(b)) if set.contains(b) => {}
            (true, Some(b)) => {
                return Err(Error::InvalidAction(format!(
                    "MEC {b} renders FoV {q} but serves no group requesting it"
                )))
            }
        }
    }
    Ok(())
}

/// Uniform draw over all valid actions.
///
/// The number of rendering choices is the product of the serving-set sizes,
/// and serving assignments of users with different FoVs are independent, so
/// each FoV's users are drawn uniformly and accepted with probability
/// `|set| / max|set|`; rendering MECs are then uniform within each set.
pub fn random_valid_action<R: Rng + ?Sized>(
    fovs: &[usize],
    mecs: usize,
    n_fov: usize,
    migration: bool,
    rng: &mut R,
) -> ActionVector {
    let mut serving = vec![0; fovs.len()];
    let mut rendering = vec![None; n_fov];
    for q in 0..n_fov {
        let users: Vec<usize> = (0..fovs.len()).filter(|&k| fovs[k] == q).collect();
        if users.is_empty() {
            continue;
        }
        let cap = users.len().min(mecs);
        loop {
            let picks: Vec<usize> = users.iter().map(|_| rng.random_range(0..mecs)).collect();
            let mut distinct = picks.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let accept = !migration || rng.random_range(0..cap) < distinct.len();
            if accept {
                for (k, b) in users.iter().zip(&picks) {
                    serving[*k] = *b;
                }
                if migration {
                    rendering[q] = Some(distinct[rng.random_range(0..distinct.len())]);
                }
                break;
            }
        }
    }
    ActionVector { serving, rendering }
}

/// Every valid action, in lexicographic order of serving then rendering.
pub fn enumerate_actions(fovs: &[usize], mecs: usize, n_fov: usize, migration: bool) -> Vec<ActionVector> {
    let k = fovs.len();
    let mut out = Vec::new();
    let mut serving = vec![0usize; k];
    loop {
        if migration {
            let sets = serving_sets(&serving, fovs, n_fov);
            let requested: Vec<usize> = (0..n_fov).filter(|&q| !sets[q].is_empty()).collect();
            let mut pick = vec![0usize; requested.len()];
            loop {
                let mut rendering = vec![None; n_fov];
                for (i, &q) in requested.iter().enumerate() {
                    rendering[q] = Some(sets[q][pick[i]]);
                }
                out.push(ActionVector {
                    serving: serving.clone(),
                    rendering,
                });
                if !advance(&mut pick, |i| sets[requested[i]].len()) {
                    break;
                }
            }
        } else {
            out.push(ActionVector {
                serving: serving.clone(),
                rendering: vec![None; n_fov],
            });
        }
        if !advance(&mut serving, |_| mecs) {
            break;
        }
    }
    out
}

/// Odometer increment with the last digit fastest; false after wrapping.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix(i) {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// Each user to its nearest MEC; each requested FoV rendered by the
/// lowest-index MEC serving it. Ties go to the lower index.
pub fn nearest_association<T: Scalar>(
    topology: &NetworkTopology<T>,
    fovs: &[usize],
    n_fov: usize,
    migration: bool,
) -> ActionVector {
    let serving: Vec<usize> = (0..topology.num_users())
        .map(|k| {
            let mut best = 0;
            for b in 1..topology.num_mecs() {
                if topology.user_mec_distance(k, b) < topology.user_mec_distance(k, best) {
                    best = b;
                }
            }
            best
        })
        .collect();
    let rendering = if migration {
        serving_sets(&serving, fovs, n_fov)
            .into_iter()
            .map(|s| s.first().copied())
            .collect()
    } else {
        vec![None; n_fov]
    };
    ActionVector { serving, rendering }
}

/// What the controller sees at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub slot: u64,
    /// Predicted FoVs, or the uplinked true FoVs when prediction is off.
    pub fovs: Vec<usize>,
    pub n_fov: usize,
    pub mecs: usize,
    /// User-major `K x B` distances divided by the arena diagonal.
    pub distances: Vec<f64>,
    /// MEC computes divided by the largest one.
    pub computes: Vec<f64>,
}

impl EnvState {
    pub fn users(&self) -> usize {
        self.fovs.len()
    }

    fn one_hot_fovs<T: Scalar>(&self, out: &mut Vec<T>) {
        for q in &self.fovs {
            for i in 0..self.n_fov {
                out.push(if i == *q { T::one() } else { T::zero() });
            }
        }
    }

    /// FoV one-hots, all distances, all computes.
    pub fn global_features<T: Scalar>(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.global_feature_len());
        self.one_hot_fovs(&mut out);
        out.extend(self.distances.iter().map(|d| T::lit(*d)));
        out.extend(self.computes.iter().map(|c| T::lit(*c)));
        out
    }

    pub fn global_feature_len(&self) -> usize {
        self.users() * (self.n_fov + self.mecs) + self.mecs
    }

    /// FoV one-hots, distances from `mec` to every user, and `mec`'s compute.
    pub fn local_features<T: Scalar>(&self, mec: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.local_feature_len());
        self.one_hot_fovs(&mut out);
        out.extend((0..self.users()).map(|k| T::lit(self.distances[k * self.mecs + mec])));
        out.push(T::lit(self.computes[mec]));
        out
    }

    pub fn local_feature_len(&self) -> usize {
        self.users() * (self.n_fov + 1) + 1
    }
}

pub fn build_state<T: Scalar>(topology: &NetworkTopology<T>, fovs: &[usize], n_fov: usize, slot: u64) -> EnvState {
    let diag = topology.arena_diagonal();
    let fmax = topology.max_compute();
    let (k, b) = (topology.num_users(), topology.num_mecs());
    let distances = (0..k * b)
        .map(|i| (topology.user_mec_distance(i / b, i % b) / diag).to_f64_lossy().min(1.0))
        .collect();
    let computes = topology.mecs.iter().map(|m| (m.compute / fmax).to_f64_lossy()).collect();
    EnvState {
        slot,
        fovs: fovs.to_vec(),
        n_fov,
        mecs: b,
        distances,
        computes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserOutcome {
    pub user: usize,
    pub serving: usize,
    /// MEC that rendered the user's FoV; `None` when the headset rendered it.
    pub rendering: Option<usize>,
    pub fov_pred: usize,
    pub fov_true: usize,
    pub sinr: f64,
    pub rate: f64,
    pub latency: LatencyBreakdown<f64>,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotEvaluation {
    pub slot: u64,
    pub reward: f64,
    pub users: Vec<UserOutcome>,
    pub groups: GroupAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub evaluation: SlotEvaluation,
    pub next_state: EnvState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    pub scheme: Scheme,
    pub prediction: bool,
    /// Draw one channel realization at construction and reuse it every slot.
    pub freeze_channels: bool,
}

/// Downlink, latency and QoE of every user under `action`; pure.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_slot(
    topology: &NetworkTopology<f64>,
    phy: &PhyParams<f64>,
    rendering: &RenderingParams<f64>,
    options: &EnvOptions,
    state: &EnvState,
    truth: &[usize],
    channels: &ChannelRealization<f64>,
    action: &ActionVector,
) -> Result<SlotEvaluation> {
    let migration = options.scheme == Scheme::MecMigration;
    validate_action(action, &state.fovs, topology.num_mecs(), state.n_fov, migration)?;
    let groups = group_users(&action.serving, &state.fovs, topology.num_mecs())?;
    let spec: Vec<(usize, Vec<usize>)> = groups.groups.iter().map(|g| (g.mec, g.members.clone())).collect();
    let active = precode_groups(&spec, channels, phy)?;
    let mut users = Vec::with_capacity(truth.len());
    let mut per_user = vec![None; truth.len()];
    for (gi, group) in groups.groups.iter().enumerate() {
        for &k in &group.members {
            let sinr = match group.kind() {
                LinkKind::Multicast => multicast_sinr(k, gi, &active, channels, phy)?,
                LinkKind::Unicast => unicast_sinr(k, gi, &active, channels, phy)?,
            };
            per_user[k] = Some((gi, sinr));
        }
    }
    let predicted = options.prediction;
    for (k, entry) in per_user.into_iter().enumerate() {
        let (gi, sinr) = entry.ok_or_else(|| Error::InvalidAction(format!("user {k} is not in any group")))?;
        let group = &groups.groups[gi];
        let downlink_rate = rate(sinr, phy);
        let serving = group.mec;
        let (renderer, role, cycles, compute) = match options.scheme {
            Scheme::VrDevice => {
                let u = &topology.users[k];
                (None, Role::RendersItself, u.device_cycles_per_bit, u.device_compute)
            }
            Scheme::MecNoMigration => {
                let m = &topology.mecs[serving];
                (Some(serving), Role::RendersItself, m.cycles_per_bit, m.compute)
            }
            Scheme::MecMigration => {
                let r = action.rendering[group.fov].expect("validated rendering MEC");
                let m = &topology.mecs[r];
                let role = if r == serving {
                    Role::RendersItself
                } else {
                    Role::ReceivesMigration {
                        distance: topology.fiber_distance(r, serving),
                    }
                };
                (Some(r), role, m.cycles_per_bit, m.compute)
            }
        };
        let inputs = LatencyInputs {
            cycles_per_bit: cycles,
            compute,
            downlink_rate,
            fiber_rate: topology.fiber_rate,
        };
        let latency = interaction_latency(options.scheme, predicted, role, rendering, &inputs)?;
        let correct = state.fovs[k] == truth[k];
        let q = psnr(latency.total, rendering.latency_threshold, rendering.qoe_delta);
        users.push(UserOutcome {
            user: k,
            serving,
            rendering: renderer,
            fov_pred: state.fovs[k],
            fov_true: truth[k],
            sinr,
            rate: downlink_rate,
            latency,
            psnr: if correct { q.psnr } else { 0.0 },
        });
    }
    let reward = users.iter().map(|u| u.psnr).sum();
    Ok(SlotEvaluation {
        slot: state.slot,
        reward,
        users,
        groups,
    })
}

/// Streams owned by one environment instance.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub mobility: SimRng,
    pub channel: SimRng,
}

#[derive(Debug, Clone)]
pub struct Env {
    topology: NetworkTopology<f64>,
    phy: PhyParams<f64>,
    rendering: RenderingParams<f64>,
    grid: FovGrid<f64>,
    diffusion: f64,
    options: EnvOptions,
    predictor: Option<FovPredictor<f64>>,
    streams: EnvStreams,
    burn_in: usize,
    eyes: Vec<EyeState<f64>>,
    history: Vec<Vec<FovIndex>>,
    truth: Vec<usize>,
    frozen: Option<ChannelRealization<f64>>,
    channels: ChannelRealization<f64>,
    state: EnvState,
    slot: u64,
}

impl Env {
    /// A predictor is required when `options.prediction` is set. The
    /// environment starts reset.
    pub fn new(
        topology: NetworkTopology<f64>,
        phy: PhyParams<f64>,
        rendering: RenderingParams<f64>,
        mobility: &MobilityParams<f64>,
        options: EnvOptions,
        predictor: Option<FovPredictor<f64>>,
        mut streams: EnvStreams,
    ) -> Result<Self> {
        phy.validate()?;
        rendering.validate()?;
        let grid = mobility.grid()?;
        if options.prediction && predictor.is_none() {
            return Err(Error::InvalidParameter("prediction mode needs a trained predictor".into()));
        }
        if let Some(p) = &predictor {
            if p.n_fov() != grid.n_fov() {
                return Err(Error::InvalidParameter("predictor and grid disagree on N_FoV".into()));
            }
        }
        let burn_in = predictor.as_ref().map_or(1, |p| p.window().max(1));
        let channels = sample_channel(&topology, 0, &mut streams.channel)?;
        let frozen = options.freeze_channels.then(|| channels.clone());
        let k = topology.num_users();
        let state = build_state(&topology, &vec![0; k], grid.n_fov(), 0);
        let mut env = Self {
            topology,
            phy,
            rendering,
            grid,
            diffusion: mobility.diffusion,
            options,
            predictor,
            streams,
            burn_in,
            eyes: Vec::new(),
            history: Vec::new(),
            truth: vec![0; k],
            frozen,
            channels,
            state,
            slot: 0,
        };
        env.reset()?;
        Ok(env)
    }

    /// New eye positions, `burn_in` slots of observed history, then the
    /// first decision slot.
    pub fn reset(&mut self) -> Result<&EnvState> {
        let k = self.topology.num_users();
        self.eyes = (0..k)
            .map(|_| EyeState::random(self.diffusion, &self.grid, &mut self.streams.mobility))
            .collect();
        self.history = self.eyes.iter().map(|e| vec![e.current_fov]).collect();
        for _ in 1..self.burn_in {
            self.advance_eyes();
        }
        self.slot = 0;
        self.prepare_slot()?;
        Ok(&self.state)
    }

    fn advance_eyes(&mut self) {
        for (eye, hist) in self.eyes.iter_mut().zip(self.history.iter_mut()) {
            *eye = step_eye(eye, &self.grid, &mut self.streams.mobility);
            hist.push(eye.current_fov);
            if hist.len() > 4 * self.burn_in + 4 {
                hist.drain(..hist.len() - self.burn_in);
            }
        }
    }

    /// Moves the eyes to this slot's true FoVs, forms the controller's view
    /// (predicted from history, or the uplinked truth) and draws the channel.
    fn prepare_slot(&mut self) -> Result<()> {
        for (eye, t) in self.eyes.iter_mut().zip(self.truth.iter_mut()) {
            *eye = step_eye(eye, &self.grid, &mut self.streams.mobility);
            *t = eye.current_fov.value();
        }
        let fovs = if self.options.prediction {
            let predictor = self.predictor.as_ref().expect("checked at construction");
            self.history
                .iter()
                .enumerate()
                .map(|(k, h)| Ok(predictor.predict_next(k, h)?.fov.value()))
                .collect::<Result<Vec<_>>>()?
        } else {
            self.truth.clone()
        };
        self.channels = match &self.frozen {
            Some(c) => c.clone(),
            None => sample_channel(&self.topology, self.slot, &mut self.streams.channel)?,
        };
        self.state = build_state(&self.topology, &fovs, self.grid.n_fov(), self.slot);
        Ok(())
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    pub fn channels(&self) -> &ChannelRealization<f64> {
        &self.channels
    }

    pub fn topology(&self) -> &NetworkTopology<f64> {
        &self.topology
    }

    pub fn options(&self) -> &EnvOptions {
        &self.options
    }

    pub fn rendering(&self) -> &RenderingParams<f64> {
        &self.rendering
    }

    pub fn phy(&self) -> &PhyParams<f64> {
        &self.phy
    }

    pub fn migration(&self) -> bool {
        self.options.scheme == Scheme::MecMigration
    }

    /// Reward of every user serving on time with a correct FoV.
    pub fn max_reward(&self) -> f64 {
        self.topology.num_users() as f64 * on_time_psnr(self.rendering.qoe_delta)
    }

    /// Outcome of `action` in the current slot without advancing.
    pub fn evaluate_action(&self, action: &ActionVector) -> Result<SlotEvaluation> {
        evaluate_slot(
            &self.topology,
            &self.phy,
            &self.rendering,
            &self.options,
            &self.state,
            &self.truth,
            &self.channels,
            action,
        )
    }

    /// Applies `action`, records the true FoVs and moves to the next slot.
    /// An invalid action is rejected before anything changes.
    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome> {
        let evaluation = self.evaluate_action(action)?;
        for (hist, t) in self.history.iter_mut().zip(&self.truth) {
            hist.push(FovIndex::new(*t, self.grid.n_fov())?);
        }
        self.slot += 1;
        self.prepare_slot()?;
        Ok(StepOutcome {
            evaluation,
            next_state: self.state.clone(),
        })
    }
}

/// Per-user, per-slot rows of an episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    rows: Vec<UserOutcome>,
    slots: Vec<u64>,
}

impl EpisodeLog {
    pub fn record(&mut self, evaluation: &SlotEvaluation) {
        for u in &evaluation.users {
            self.rows.push(*u);
            self.slots.push(evaluation.slot);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "slot,user,serving_mec,rendering_mec,fov_pred,fov_true,t_uplink,t_render,t_migration,t_downlink,t_total,psnr"
        )?;
        for (slot, u) in self.slots.iter().zip(&self.rows) {
            let rendering = u.rendering.map(|r| r.to_string()).unwrap_or_default();
            let l = &u.latency;
            writeln!(
                out,
                "{slot},{},{},{rendering},{},{},{},{},{},{},{},{}",
                u.user, u.serving, u.fov_pred, u.fov_true, l.uplink, l.render, l.migration, l.downlink, l.total, u.psnr
            )?;
        }
        Ok(())
    }
}
