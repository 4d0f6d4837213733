//! Straight-line reference implementations and shared helpers for the
//! integration tests. Nothing here calls into the library's formula code.
#![allow(dead_code)]

use rand::Rng;
use vrmec::agents::{critic_gradient, dqn_loss_and_grad, log_policy, HeadLayout, NextSelection, Transition};
use vrmec::env::{random_valid_action, ActionVector};
use vrmec::latency::Scheme;
use vrmec::model::{MecNode, NetworkTopology, PhyParams, Point2, RenderingParams, VrUser};
use vrmec::neural::{cross_entropy, finite_difference_check, GruClassifier, Mlp};
use vrmec::rng;

pub type C = (f64, f64);

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn cadd(a: C, b: C) -> C {
    (a.0 + b.0, a.1 + b.1)
}

fn conj_mul(h: C, v: C) -> C {
    (h.0 * v.0 + h.1 * v.1, h.0 * v.1 - h.1 * v.0)
}

pub fn variance(d: f64, exponent: f64) -> f64 {
    let d = if d < 1.0 { 1.0 } else { d };
    1.0 / d.powf(exponent)
}

pub fn precoder(hs: &[Vec<C>], power: f64) -> Vec<C> {
    let n = hs[0].len();
    let mut u = vec![(0.0, 0.0); n];
    for h in hs {
        for i in 0..n {
            u[i] = cadd(u[i], h[i]);
        }
    }
    let k = hs.len() as f64;
    let norm: f64 = u.iter().map(|c| (c.0 / k).powi(2) + (c.1 / k).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![((power / n as f64).sqrt(), 0.0); n];
    }
    u.iter().map(|c| (c.0 / k * power.sqrt() / norm, c.1 / k * power.sqrt() / norm)).collect()
}

pub fn gain(h: &[C], v: &[C]) -> f64 {
    let mut acc = (0.0, 0.0);
    for i in 0..h.len() {
        acc = cadd(acc, conj_mul(h[i], v[i]));
    }
    acc.0 * acc.0 + acc.1 * acc.1
}

/// One downlink slot in plain arrays: `fading[k][b]` is the unit-variance
/// vector, `dist[k][b]` the distance.
pub struct Downlink {
    pub fading: Vec<Vec<Vec<C>>>,
    pub dist: Vec<Vec<f64>>,
    pub noise: f64,
    pub exp_mul: f64,
    pub exp_uni: f64,
    pub power: f64,
    pub bandwidth: f64,
}

impl Downlink {
    fn vector(&self, k: usize, b: usize, multicast: bool) -> Vec<C> {
        let e = if multicast { self.exp_mul } else { self.exp_uni };
        let s = variance(self.dist[k][b], e).sqrt();
        self.fading[k][b].iter().map(|c| (c.0 * s, c.1 * s)).collect()
    }

    /// Per-user SINR for groups given as `(mec, members)`.
    pub fn sinrs(&self, groups: &[(usize, Vec<usize>)], users: usize) -> Vec<f64> {
        let precoders: Vec<(usize, bool, Vec<C>)> = groups
            .iter()
            .map(|(b, members)| {
                let multicast = members.len() > 1;
                let hs: Vec<Vec<C>> = members.iter().map(|&k| self.vector(k, *b, multicast)).collect();
                (*b, multicast, precoder(&hs, self.power))
            })
            .collect();
        let mut out = vec![0.0; users];
        for (gi, (_, members)) in groups.iter().enumerate() {
            let multicast = precoders[gi].1;
            for &k in members {
                let mut signal = 0.0;
                let mut interference = 0.0;
                for (gj, (b, _, v)) in precoders.iter().enumerate() {
                    let g = gain(&self.vector(k, *b, multicast), v);
                    if gi == gj {
                        signal = g;
                    } else {
                        interference += g;
                    }
                }
                out[k] = signal / (interference + self.noise);
            }
        }
        out
    }

    pub fn rate(&self, sinr: f64) -> f64 {
        self.bandwidth * (1.0 + sinr).ln() / 2f64.ln()
    }
}

pub fn fov_bits(r: f64, bpp: f64, views: f64) -> f64 {
    r * r * 3.0 * bpp * views
}

pub fn stitched(c: f64) -> f64 {
    4.0 * c / 3.0
}

/// `uplink + render + migration + downlink` for one user.
#[allow(clippy::too_many_arguments)]
pub fn loop_latency(
    scheme: Scheme,
    predicted: bool,
    uplink: f64,
    c: f64,
    cycles: f64,
    compute: f64,
    fiber_m: f64,
    fiber_rate: f64,
    ratio: f64,
    rate: f64,
) -> f64 {
    let m = stitched(c);
    let up = if predicted { 0.0 } else { uplink };
    let render = cycles * m / compute;
    let mig = if scheme == Scheme::MecMigration { fiber_m / fiber_rate } else { 0.0 };
    let payload = if scheme == Scheme::VrDevice { m } else { c };
    let down = if rate > 0.0 { payload / (ratio * rate) } else { 1e9 };
    up + render + mig + down
}

pub fn psnr(latency: f64, threshold: f64, delta: f64) -> f64 {
    let mse = if latency <= threshold { 0.0 } else { 1.0 };
    10.0 * ((1.0 + delta) / (mse + delta)).log10()
}

pub fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    (0..rewards.len()).map(|t| gamma.powi(t as i32) * rewards[t]).sum()
}

/// Groups of users sharing (serving MEC, FoV), in any order.
pub fn groups_of(serving: &[usize], fovs: &[usize]) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for k in 0..serving.len() {
        match out.iter_mut().find(|g| g.0 == serving[k] && g.1 == fovs[k]) {
            Some(g) => g.2.push(k),
            None => out.push((serving[k], fovs[k], vec![k])),
        }
    }
    out
}

/// Builds an explicit topology with the given MEC computes and positions.
pub fn topology(mec_pos: &[(f64, f64)], computes: &[f64], user_pos: &[(f64, f64)], side: f64) -> NetworkTopology<f64> {
    let mecs = mec_pos
        .iter()
        .zip(computes)
        .enumerate()
        .map(|(id, (p, f))| MecNode {
            id,
            position: Point2::new(p.0, p.1),
            compute: *f,
            cycles_per_bit: 1000.0,
            antennas: 4,
        })
        .collect();
    let users = user_pos
        .iter()
        .enumerate()
        .map(|(id, p)| VrUser {
            id,
            position: Point2::new(p.0, p.1),
            device_compute: 2e9,
            device_cycles_per_bit: 1000.0,
        })
        .collect();
    NetworkTopology::new(mecs, users, side, 10e9).unwrap()
}

/// Largest relative deviation of the library from the references above, per
/// formula family, over `instances` seeded random cases each.
pub fn oracle_suite(instances: usize) -> Vec<(&'static str, f64)> {
    use vrmec::channel::{precode_groups, rate, ChannelRealization, LinkKind};
    use vrmec::env::{build_state, evaluate_slot, EnvOptions};
    use vrmec::latency;

    let mut r = rng::stream(2024, "oracle");
    let mut worst = [0.0f64; 5];
    for _ in 0..instances {
        // SINR and rates on a random slot
        let users = r.random_range(1..=6);
        let mecs = r.random_range(users..=users + 2);
        let antennas = r.random_range(1..=4);
        let side = r.random_range(20.0..200.0);
        let mec_pos: Vec<(f64, f64)> = (0..mecs).map(|_| (r.random_range(0.0..side), r.random_range(0.0..side))).collect();
        let user_pos: Vec<(f64, f64)> = (0..users).map(|_| (r.random_range(0.0..side), r.random_range(0.0..side))).collect();
        let computes: Vec<f64> = (0..mecs).map(|_| r.random_range(1e9..5e9)).collect();
        let topo = topology(&mec_pos, &computes, &user_pos, side);
        let phy = PhyParams::<f64> {
            noise_power: 10f64.powf(r.random_range(-14.0..-9.0)),
            pathloss_exponent_mul: r.random_range(2.0..4.0),
            pathloss_exponent_uni: r.random_range(2.0..4.0),
            tx_power_per_group: r.random_range(0.1..2.0),
            bandwidth: r.random_range(1e5..1e8),
            ..PhyParams::default()
        };
        let fading: Vec<C> = (0..users * mecs * antennas).map(|_| (r.random_range(-1.5..1.5), r.random_range(-1.5..1.5))).collect();
        let dist: Vec<Vec<f64>> = (0..users)
            .map(|k| (0..mecs).map(|b| topo.user_mec_distance(k, b)).collect())
            .collect();
        let reference = Downlink {
            fading: (0..users)
                .map(|k| (0..mecs).map(|b| fading[(k * mecs + b) * antennas..(k * mecs + b + 1) * antennas].to_vec()).collect())
                .collect(),
            dist: dist.clone(),
            noise: phy.noise_power,
            exp_mul: phy.pathloss_exponent_mul,
            exp_uni: phy.pathloss_exponent_uni,
            power: phy.tx_power_per_group,
            bandwidth: phy.bandwidth,
        };
        let channels = ChannelRealization::from_parts(
            0,
            users,
            mecs,
            antennas,
            fading.iter().map(|c| num_complex::Complex::new(c.0, c.1)).collect(),
            dist.iter().flatten().copied().collect(),
        )
        .unwrap();
        let n_fov = r.random_range(1..=4);
        let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
        let migration = r.random_bool(0.5);
        let action = random_valid_action(&fovs, mecs, n_fov, migration, &mut r);
        let groups: Vec<(usize, Vec<usize>)> = groups_of(&action.serving, &fovs).into_iter().map(|g| (g.0, g.2)).collect();
        let expected = reference.sinrs(&groups, users);
        let active = precode_groups(&groups, &channels, &phy).unwrap();
        for (gi, (_, members)) in groups.iter().enumerate() {
            for &k in members {
                let got = if members.len() > 1 {
                    vrmec::channel::multicast_sinr(k, gi, &active, &channels, &phy).unwrap()
                } else {
                    vrmec::channel::unicast_sinr(k, gi, &active, &channels, &phy).unwrap()
                };
                worst[0] = worst[0].max(rel_err(got, expected[k]));
                worst[0] = worst[0].max(rel_err(rate(got, &phy), reference.rate(expected[k])));
                assert_eq!(active[gi].kind == LinkKind::Multicast, members.len() > 1);
            }
        }

        // data sizes
        let rendering = RenderingParams::<f64> {
            resolution: r.random_range(10.0..2000.0),
            viewpoints: r.random_range(1..=2),
            bits_per_pixel: r.random_range(1..=16),
            compression_ratio: r.random_range(1.0..400.0),
            latency_threshold: r.random_range(0.005..0.1),
            uplink_latency: r.random_range(0.0..0.03),
            qoe_delta: r.random_range(0.1..2.0),
        };
        let c = fov_bits(rendering.resolution, rendering.bits_per_pixel as f64, rendering.viewpoints as f64);
        worst[1] = worst[1].max(rel_err(latency::fov_bits(&rendering).unwrap(), c));
        worst[1] = worst[1].max(rel_err(latency::stitched_bits(&rendering).unwrap(), stitched(c)));

        // whole-slot latency and PSNR for every scheme
        let truth: Vec<usize> = fovs.iter().map(|&q| if r.random_bool(0.8) { q } else { r.random_range(0..n_fov) }).collect();
        let state = build_state(&topo, &fovs, n_fov, 0);
        for scheme in Scheme::ALL {
            let predicted = r.random_bool(0.5);
            let act = if scheme == Scheme::MecMigration {
                random_valid_action(&fovs, mecs, n_fov, true, &mut r)
            } else {
                ActionVector { serving: action.serving.clone(), rendering: vec![None; n_fov] }
            };
            let options = EnvOptions { scheme, prediction: predicted, freeze_channels: false };
            let got = evaluate_slot(&topo, &phy, &rendering, &options, &state, &truth, &channels, &act).unwrap();
            let groups: Vec<(usize, Vec<usize>)> = groups_of(&act.serving, &fovs).into_iter().map(|g| (g.0, g.2)).collect();
            let sinr = reference.sinrs(&groups, users);
            let mut reward = 0.0;
            for k in 0..users {
                let b = act.serving[k];
                let (cycles, compute, fiber) = match scheme {
                    Scheme::VrDevice => (1000.0, 2e9, 0.0),
                    Scheme::MecNoMigration => (1000.0, computes[b], 0.0),
                    Scheme::MecMigration => {
                        let rb = act.rendering[fovs[k]].unwrap();
                        let (p, s) = (mec_pos[rb], mec_pos[b]);
                        (1000.0, computes[rb], ((p.0 - s.0).powi(2) + (p.1 - s.1).powi(2)).sqrt())
                    }
                };
                let lat = loop_latency(
                    scheme,
                    predicted,
                    rendering.uplink_latency,
                    c,
                    cycles,
                    compute,
                    fiber,
                    10e9,
                    rendering.compression_ratio,
                    reference.rate(sinr[k]),
                );
                let q = if fovs[k] == truth[k] { psnr(lat, rendering.latency_threshold, rendering.qoe_delta) } else { 0.0 };
                reward += q;
                let u = &got.users[k];
                worst[2] = worst[2].max(rel_err(u.latency.total, lat));
                worst[3] = worst[3].max(rel_err(u.psnr, q));
            }
            worst[3] = worst[3].max(rel_err(got.reward, reward));
        }

        // discounted return
        let len = r.random_range(0..50);
        let rewards: Vec<f64> = (0..len).map(|_| r.random_range(-5.0..20.0)).collect();
        let gamma = r.random_range(0.0..1.0);
        worst[4] = worst[4].max(rel_err(latency::episode_return(&rewards, gamma), discounted(&rewards, gamma)));
    }
    vec![
        ("multicast/unicast SINR and rate", worst[0]),
        ("data sizes", worst[1]),
        ("interaction latency", worst[2]),
        ("PSNR and slot reward", worst[3]),
        ("discounted return", worst[4]),
    ]
}

/// Worst finite-difference error per model at `seed`.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng::stream(seed, "gradcheck");
    let eps = 1e-6;
    let floor = 1e-6;

    let mlp = Mlp::<f64>::new(&[5, 7, 6, 3], &mut r).unwrap();
    let x: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let objective = |net: &Mlp<f64>| net.predict(&x).unwrap().iter().zip(&w).map(|(y, w)| y * w).sum::<f64>();
    let (_, cache) = mlp.forward(&x).unwrap();
    let analytic = mlp.backward(&cache, &w).unwrap();
    let mlp_err = finite_difference_check(&mlp.params, &analytic, eps, floor, |p| {
        let mut n = mlp.clone();
        n.params = p.clone();
        objective(&n)
    })
    .max_relative_error;

    let gru = GruClassifier::<f64>::new(4, 6, 4, &mut r).unwrap();
    let seq: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let target = r.random_range(0..4);
    let (logits, cache) = gru.forward(&seq).unwrap();
    let (_, dlogits) = cross_entropy(&logits, target);
    let analytic = gru.backward(&cache, &dlogits).unwrap();
    let gru_err = finite_difference_check(&gru.params, &analytic, eps, floor, |p| {
        let mut g = gru.clone();
        g.params = p.clone();
        cross_entropy(&g.forward(&seq).unwrap().0, target).0
    })
    .max_relative_error;

    // DQN squared TD loss with both bootstrap kinds
    let (users, mecs, n_fov) = (2, 3, 2);
    let layout = HeadLayout { users, mecs, n_fov, migration: true };
    let inputs = 6;
    let online = Mlp::<f64>::new(&[inputs, 8, layout.outputs()], &mut r).unwrap();
    let target_net = Mlp::<f64>::new(&[inputs, 8, layout.outputs()], &mut r).unwrap();
    let batch: Vec<Transition<f64>> = (0..4)
        .map(|i| {
            let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
            let a = random_valid_action(&fovs, mecs, n_fov, true, &mut r);
            let next_fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
            Transition {
                state: (0..inputs).map(|_| r.random_range(-1.0..1.0)).collect(),
                selected: layout.selected(&a),
                reward: r.random_range(0.0..10.0),
                next_state: (0..inputs).map(|_| r.random_range(-1.0..1.0)).collect(),
                next: if i % 2 == 0 {
                    NextSelection::GreedyMax { fovs: next_fovs }
                } else {
                    NextSelection::Given(vec![0, 3])
                },
                terminal: i == 3,
            }
        })
        .collect();
    let refs: Vec<&Transition<f64>> = batch.iter().collect();
    let (_, analytic) = dqn_loss_and_grad(&online, &target_net, &layout, &refs, 0.9).unwrap();
    let dqn_err = finite_difference_check(&online.params, &analytic, eps, floor, |p| {
        let mut n = online.clone();
        n.params = p.clone();
        dqn_loss_and_grad(&n, &target_net, &layout, &refs, 0.9).unwrap().0
    })
    .max_relative_error;

    // actor log-policy through the network, and the critic value
    let actor = Mlp::<f64>::new(&[inputs, 8, layout.outputs()], &mut r).unwrap();
    let s: Vec<f64> = (0..inputs).map(|_| r.random_range(-1.0..1.0)).collect();
    let fovs: Vec<usize> = (0..users).map(|_| r.random_range(0..n_fov)).collect();
    let a = random_valid_action(&fovs, mecs, n_fov, true, &mut r);
    let (logits, cache) = actor.forward(&s).unwrap();
    let (_, dlogits) = log_policy(&layout, &logits, &a, &fovs).unwrap();
    let analytic = actor.backward(&cache, &dlogits).unwrap();
    let actor_err = finite_difference_check(&actor.params, &analytic, eps, floor, |p| {
        let mut n = actor.clone();
        n.params = p.clone();
        log_policy(&layout, &n.predict(&s).unwrap(), &a, &fovs).unwrap().0
    })
    .max_relative_error;

    let critic = Mlp::<f64>::new(&[inputs, 8, 1], &mut r).unwrap();
    let (_, analytic) = critic_gradient(&critic, &s).unwrap();
    let critic_err = finite_difference_check(&critic.params, &analytic, eps, floor, |p| {
        let mut n = critic.clone();
        n.params = p.clone();
        n.predict(&s).unwrap()[0]
    })
    .max_relative_error;

    vec![
        ("MLP", mlp_err),
        ("GRU through time", gru_err),
        ("DQN loss", dqn_err),
        ("actor log-policy", actor_err),
        ("critic value", critic_err),
    ]
}

/// Reference log-policy of a factorized action: per-user softmax over MECs
/// plus, under migration, a softmax over each FoV's serving MECs.
pub fn reference_log_policy(layout: &HeadLayout, logits: &[f64], a: &ActionVector, fovs: &[usize]) -> f64 {
    let lse = |xs: &[f64]| {
        let m = xs.iter().cloned().fold(f64::MIN, f64::max);
        m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    let mut total = 0.0;
    for k in 0..layout.users {
        let row: Vec<f64> = (0..layout.mecs).map(|b| logits[k * layout.mecs + b]).collect();
        total += row[a.serving[k]] - lse(&row);
    }
    if layout.migration {
        for q in 0..layout.n_fov {
            let Some(rb) = a.rendering[q] else { continue };
            let mut set: Vec<usize> = (0..layout.users).filter(|&k| fovs[k] == q).map(|k| a.serving[k]).collect();
            set.sort_unstable();
            set.dedup();
            let base = layout.users * layout.mecs + q * layout.mecs;
            let row: Vec<f64> = set.iter().map(|b| logits[base + b]).collect();
            total += logits[base + rb] - lse(&row);
        }
    }
    total
}
