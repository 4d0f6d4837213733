//! Rayleigh-fading downlink: per-slot channel draws, group precoders and the
//! multicast/unicast SINR and rate computations.

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{FadingMode, NetworkTopology, PhyParams};
use crate::rng::standard_normal;
use crate::scalar::Scalar;

/// User-to-MEC distances are floored here before path loss is applied.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Whether a user is received as part of a multicast or a unicast group; this
/// selects the large-scale exponent applied to its channel vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Multicast,
    Unicast,
}

/// Per-entry variance of a user-MEC channel vector.
pub fn large_scale_variance<T: Scalar>(distance: T, kind: LinkKind, phy: &PhyParams<T>) -> T {
    let exponent = match kind {
        LinkKind::Multicast => phy.pathloss_exponent_mul,
        LinkKind::Unicast => phy.pathloss_exponent_uni,
    };
    match phy.fading {
        FadingMode::PathLoss => distance.max(T::lit(MIN_DISTANCE_M)).powf(-exponent),
        FadingMode::ConstantVariance => exponent,
    }
}

/// One slot's small-scale fading for every (user, MEC) pair.
///
/// Entries are stored with unit variance; the large-scale factor is applied on
/// access because it depends on whether the user ends up multicast or unicast.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    pub slot: u64,
    users: usize,
    mecs: usize,
    antennas: usize,
    fading: Vec<Complex<T>>,
    distances: Vec<T>,
}

impl<T: Scalar> ChannelRealization<T> {
    /// Builds a realization from explicit unit-variance fading entries laid out
    /// as `[(user * mecs + mec) * antennas + n]`.
    pub fn from_parts(
        slot: u64,
        users: usize,
        mecs: usize,
        antennas: usize,
        fading: Vec<Complex<T>>,
        distances: Vec<T>,
    ) -> Result<Self> {
        if fading.len() != users * mecs * antennas || distances.len() != users * mecs {
            return Err(Error::ShapeMismatch(
                "fading/distances do not match users x mecs x antennas".into(),
            ));
        }
        Ok(Self {
            slot,
            users,
            mecs,
            antennas,
            fading,
            distances,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn distance(&self, user: usize, mec: usize) -> T {
        self.distances[user * self.mecs + mec]
    }

    pub fn small_scale(&self, user: usize, mec: usize) -> &[Complex<T>] {
        let start = (user * self.mecs + mec) * self.antennas;
        &self.fading[start..start + self.antennas]
    }

    /// Channel vector `h` (multicast) or `g` (unicast) between `user` and `mec`.
    pub fn vector(
        &self,
        user: usize,
        mec: usize,
        kind: LinkKind,
        phy: &PhyParams<T>,
    ) -> Vec<Complex<T>> {
        let scale = large_scale_variance(self.distance(user, mec), kind, phy).sqrt();
        self.small_scale(user, mec)
            .iter()
            .map(|c| c.scale(scale))
            .collect()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn mecs(&self) -> usize {
        self.mecs
    }
}

/// Draws i.i.d. `CN(0, 1)` small-scale fading for every user-MEC antenna pair.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(
    topology: &NetworkTopology<T>,
    slot: u64,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    let antennas = topology.mecs[0].antennas;
    if topology.mecs.iter().any(|m| m.antennas != antennas) {
        return Err(Error::InvalidParameter(
            "all MECs must have the same antenna count".into(),
        ));
    }
    let (k, b) = (topology.num_users(), topology.num_mecs());
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut fading = Vec::with_capacity(k * b * antennas);
    let mut distances = Vec::with_capacity(k * b);
    for user in 0..k {
        for mec in 0..b {
            distances.push(topology.user_mec_distance(user, mec));
            for _ in 0..antennas {
                let re = standard_normal(rng) * half;
                let im = standard_normal(rng) * half;
                fading.push(Complex::new(T::lit(re), T::lit(im)));
            }
        }
    }
    ChannelRealization::from_parts(slot, k, b, antennas, fading, distances)
}

fn norm_sqr<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Maximum-ratio precoder towards the mean of the group's channel vectors,
/// scaled to `power`.
pub fn mrt_precoder<T: Scalar>(group_channels: &[Vec<Complex<T>>], power: T) -> Result<Vec<Complex<T>>> {
    let first = group_channels
        .first()
        .ok_or_else(|| Error::InvalidParameter("precoder needs a non-empty group".into()))?;
    let n = first.len();
    if n == 0 || group_channels.iter().any(|h| h.len() != n) {
        return Err(Error::ShapeMismatch("channel vectors differ in length".into()));
    }
    let count = T::lit(group_channels.len() as f64);
    let mut u = vec![Complex::new(T::zero(), T::zero()); n];
    for h in group_channels {
        for (acc, c) in u.iter_mut().zip(h) {
            *acc = *acc + *c;
        }
    }
    for c in &mut u {
        *c = c.unscale(count);
    }
    let norm = norm_sqr(&u).sqrt();
    if !(norm > T::zero()) {
        let level = (power / T::lit(n as f64)).sqrt();
        return Ok(vec![Complex::new(level, T::zero()); n]);
    }
    let scale = power.sqrt() / norm;
    Ok(u.into_iter().map(|c| c.scale(scale)).collect())
}

/// `|h^H v|^2`.
pub fn beam_gain<T: Scalar>(h: &[Complex<T>], v: &[Complex<T>]) -> T {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (hc, vc) in h.iter().zip(v) {
        acc = acc + hc.conj() * *vc;
    }
    acc.norm_sqr()
}

/// A transmitting group: the MEC serving it, its members and its precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGroup<T> {
    pub mec: usize,
    pub members: Vec<usize>,
    pub kind: LinkKind,
    pub precoder: Vec<Complex<T>>,
}

/// Builds MRT precoders for grouped users; a group with one member is unicast.
pub fn precode_groups<T: Scalar>(
    groups: &[(usize, Vec<usize>)],
    channels: &ChannelRealization<T>,
    phy: &PhyParams<T>,
) -> Result<Vec<ActiveGroup<T>>> {
    groups
        .iter()
        .map(|(mec, members)| {
            let kind = if members.len() >= 2 {
                LinkKind::Multicast
            } else {
                LinkKind::Unicast
            };
            let vectors: Vec<_> = members
                .iter()
                .map(|&u| channels.vector(u, *mec, kind, phy))
                .collect();
            Ok(ActiveGroup {
                mec: *mec,
                members: members.clone(),
                kind,
                precoder: mrt_precoder(&vectors, phy.tx_power_per_group)?,
            })
        })
        .collect()
}

fn sinr_for<T: Scalar>(
    user: usize,
    own: usize,
    groups: &[ActiveGroup<T>],
    channels: &ChannelRealization<T>,
    phy: &PhyParams<T>,
    expected: LinkKind,
) -> Result<T> {
    let group = groups
        .get(own)
        .ok_or_else(|| Error::InvalidParameter(format!("group {own} does not exist")))?;
    if group.kind != expected {
        return Err(Error::InvalidParameter(format!(
            "group {own} is {:?}, not {expected:?}",
            group.kind
        )));
    }
    if !group.members.contains(&user) {
        return Err(Error::InvalidParameter(format!(
            "user {user} is not a member of group {own}"
        )));
    }
    let signal = beam_gain(&channels.vector(user, group.mec, expected, phy), &group.precoder);
    let interference: T = groups
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != own)
        .map(|(_, g)| beam_gain(&channels.vector(user, g.mec, expected, phy), &g.precoder))
        .sum();
    Ok(signal / (interference + phy.noise_power))
}

/// SINR of `user` in multicast group `own`; interference is every other
/// active group, multicast or unicast.
pub fn multicast_sinr<T: Scalar>(
    user: usize,
    own: usize,
    groups: &[ActiveGroup<T>],
    channels: &ChannelRealization<T>,
    phy: &PhyParams<T>,
) -> Result<T> {
    sinr_for(user, own, groups, channels, phy, LinkKind::Multicast)
}

/// SINR of the unicast user of group `own`.
pub fn unicast_sinr<T: Scalar>(
    user: usize,
    own: usize,
    groups: &[ActiveGroup<T>],
    channels: &ChannelRealization<T>,
    phy: &PhyParams<T>,
) -> Result<T> {
    sinr_for(user, own, groups, channels, phy, LinkKind::Unicast)
}

/// Achievable rate in bits/s: `bandwidth * log2(1 + sinr)`.
pub fn rate<T: Scalar>(sinr: T, phy: &PhyParams<T>) -> T {
    phy.bandwidth * (T::one() + sinr.max(T::zero())).log2()
}
