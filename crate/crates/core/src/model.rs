//! Domain types for the network: MEC nodes, VR users, geometry and the
//! physical/rendering parameter blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of one tile of the FoV grid, always `< n_fov`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FovIndex(usize);

impl FovIndex {
    pub fn new(value: usize, n_fov: usize) -> Result<Self> {
        if value < n_fov {
            Ok(Self(value))
        } else {
            Err(Error::FovOutOfRange { index: value, n_fov })
        }
    }

    pub fn value(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for FovIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MecNode<T> {
    pub id: usize,
    pub position: Point2<T>,
    /// Rendering capability in cycles/s.
    pub compute: T,
    pub cycles_per_bit: T,
    pub antennas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrUser<T> {
    pub id: usize,
    pub position: Point2<T>,
    /// Device rendering capability in cycles/s.
    pub device_compute: T,
    pub device_cycles_per_bit: T,
}

/// Static geometry and compute resources of one simulated deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology<T> {
    pub mecs: Vec<MecNode<T>>,
    pub users: Vec<VrUser<T>>,
    pub arena_side: T,
    /// Fiber rate between MECs in bits/s.
    pub fiber_rate: T,
    /// Symmetric MEC-to-MEC fiber length in meters, row-major `B x B`.
    fiber_distance: Vec<T>,
}

impl<T: Scalar> NetworkTopology<T> {
    /// Assembles a topology from explicit nodes; fiber lengths follow MEC geometry.
    pub fn new(
        mecs: Vec<MecNode<T>>,
        users: Vec<VrUser<T>>,
        arena_side: T,
        fiber_rate: T,
    ) -> Result<Self> {
        if mecs.is_empty() || users.is_empty() {
            return Err(Error::InvalidParameter(
                "topology needs at least one MEC and one user".into(),
            ));
        }
        if !(arena_side > T::zero()) || !(fiber_rate > T::zero()) {
            return Err(Error::InvalidParameter(
                "arena side and fiber rate must be positive".into(),
            ));
        }
        for m in &mecs {
            if !(m.compute > T::zero()) || !(m.cycles_per_bit > T::zero()) || m.antennas == 0 {
                return Err(Error::InvalidParameter(format!(
                    "MEC {} needs positive compute, cycles/bit and antennas",
                    m.id
                )));
            }
        }
        for u in &users {
            let inside = |v: T| v >= T::zero() && v <= arena_side;
            if !inside(u.position.x) || !inside(u.position.y) {
                return Err(Error::InvalidParameter(format!(
                    "user {} lies outside the arena",
                    u.id
                )));
            }
        }
        let b = mecs.len();
        let mut fiber_distance = vec![T::zero(); b * b];
        for i in 0..b {
            for j in 0..b {
                if i != j {
                    fiber_distance[i * b + j] = mecs[i].position.distance(&mecs[j].position);
                }
            }
        }
        Ok(Self {
            mecs,
            users,
            arena_side,
            fiber_rate,
            fiber_distance,
        })
    }

    pub fn num_mecs(&self) -> usize {
        self.mecs.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn fiber_distance(&self, from: usize, to: usize) -> T {
        self.fiber_distance[from * self.mecs.len() + to]
    }

    pub fn user_mec_distance(&self, user: usize, mec: usize) -> T {
        self.users[user].position.distance(&self.mecs[mec].position)
    }

    pub fn arena_diagonal(&self) -> T {
        self.arena_side * T::SQRT_2()
    }

    pub fn max_compute(&self) -> T {
        self.mecs
            .iter()
            .map(|m| m.compute)
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// How the per-entry channel variance is obtained from geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FadingMode {
    /// Variance `d^-exponent` with `d` floored at one meter.
    #[default]
    PathLoss,
    /// Variance equal to the exponent itself, independent of distance.
    ConstantVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyParams<T> {
    /// Receiver noise power in watts.
    pub noise_power: T,
    pub pathloss_exponent_mul: T,
    pub pathloss_exponent_uni: T,
    /// Transmit power of each group's precoder in watts.
    pub tx_power_per_group: T,
    pub bandwidth: T,
    pub fading: FadingMode,
}

impl<T: Scalar> Default for PhyParams<T> {
    fn default() -> Self {
        Self {
            noise_power: T::lit(dbm_to_watts(-110.0)),
            pathloss_exponent_mul: T::lit(3.0),
            pathloss_exponent_uni: T::lit(3.0),
            tx_power_per_group: T::one(),
            bandwidth: T::lit(100e6),
            fading: FadingMode::PathLoss,
        }
    }
}

impl<T: Scalar> PhyParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_power", self.noise_power),
            ("pathloss_exponent_mul", self.pathloss_exponent_mul),
            ("pathloss_exponent_uni", self.pathloss_exponent_uni),
            ("tx_power_per_group", self.tx_power_per_group),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderingParams<T> {
    /// Single-eye side resolution in pixels.
    pub resolution: T,
    pub viewpoints: u32,
    pub bits_per_pixel: u32,
    pub compression_ratio: T,
    /// Interaction-latency requirement in seconds.
    pub latency_threshold: T,
    /// Uplink FoV-report latency in seconds, paid only without prediction.
    pub uplink_latency: T,
    /// Offset keeping the PSNR finite.
    pub qoe_delta: T,
}

impl<T: Scalar> Default for RenderingParams<T> {
    fn default() -> Self {
        Self {
            resolution: T::lit(1080.0),
            viewpoints: 2,
            bits_per_pixel: 8,
            compression_ratio: T::lit(200.0),
            latency_threshold: T::lit(0.030),
            uplink_latency: T::lit(0.010),
            qoe_delta: T::one(),
        }
    }
}

impl<T: Scalar> RenderingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > T::zero()) {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        if !(self.compression_ratio >= T::one()) {
            return Err(Error::InvalidParameter("compression_ratio must be >= 1".into()));
        }
        if !(self.latency_threshold > T::zero()) {
            return Err(Error::InvalidParameter("latency_threshold must be positive".into()));
        }
        if !(self.uplink_latency >= T::zero()) || !(self.qoe_delta > T::zero()) {
            return Err(Error::InvalidParameter(
                "uplink_latency must be >= 0 and qoe_delta > 0".into(),
            ));
        }
        if self.viewpoints == 0 || self.bits_per_pixel == 0 {
            return Err(Error::InvalidParameter(
                "viewpoints and bits_per_pixel must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sizes and resource ranges used to draw a random deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyParams<T> {
    pub mecs: usize,
    pub users: usize,
    pub arena_side: T,
    pub mec_compute_min: T,
    pub mec_compute_max: T,
    pub mec_cycles_per_bit: T,
    pub vr_compute: T,
    pub vr_cycles_per_bit: T,
    pub fiber_rate: T,
    pub antennas: usize,
}

impl<T: Scalar> Default for TopologyParams<T> {
    fn default() -> Self {
        Self {
            mecs: 8,
            users: 8,
            arena_side: T::lit(100.0),
            mec_compute_min: T::lit(4e9),
            mec_compute_max: T::lit(5e9),
            mec_cycles_per_bit: T::lit(1000.0),
            vr_compute: T::lit(2e9),
            vr_cycles_per_bit: T::lit(1000.0),
            fiber_rate: T::lit(10e9),
            antennas: 4,
        }
    }
}

impl<T: Scalar> TopologyParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.mecs == 0 || self.users == 0 {
            return Err(Error::InvalidParameter(
                "need at least one MEC and one user".into(),
            ));
        }
        // every group could end up on its own MEC, so K <= B keeps M + U <= B
        if self.users > self.mecs {
            return Err(Error::InvalidParameter(format!(
                "{} users exceed {} MECs",
                self.users, self.mecs
            )));
        }
        if !(self.arena_side > T::zero()) {
            return Err(Error::InvalidParameter("arena_side must be positive".into()));
        }
        if !(self.mec_compute_min > T::zero()) || self.mec_compute_max < self.mec_compute_min {
            return Err(Error::InvalidParameter(
                "need 0 < mec_compute_min <= mec_compute_max".into(),
            ));
        }
        let positive = [
            self.mec_cycles_per_bit,
            self.vr_compute,
            self.vr_cycles_per_bit,
            self.fiber_rate,
        ];
        if positive.iter().any(|v| !(*v > T::zero())) || self.antennas == 0 {
            return Err(Error::InvalidParameter(
                "cycles/bit, VR compute, fiber rate and antennas must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Draws MEC and user positions uniformly in the arena and MEC computes
/// uniformly in `[mec_compute_min, mec_compute_max]`.
pub fn build_topology<T: Scalar, R: Rng + ?Sized>(
    params: &TopologyParams<T>,
    rng: &mut R,
) -> Result<NetworkTopology<T>> {
    params.validate()?;
    let side = params.arena_side.to_f64_lossy();
    let lo = params.mec_compute_min.to_f64_lossy();
    let hi = params.mec_compute_max.to_f64_lossy();
    let point = |rng: &mut R| {
        Point2::new(
            T::lit(rng.random::<f64>() * side),
            T::lit(rng.random::<f64>() * side),
        )
    };
    let mut mecs = Vec::with_capacity(params.mecs);
    for id in 0..params.mecs {
        let position = point(rng);
        let compute = T::lit(lo + (hi - lo) * rng.random::<f64>());
        mecs.push(MecNode {
            id,
            position,
            compute,
            cycles_per_bit: params.mec_cycles_per_bit,
            antennas: params.antennas,
        });
    }
    let users = (0..params.users)
        .map(|id| VrUser {
            id,
            position: point(rng),
            device_compute: params.vr_compute,
            device_cycles_per_bit: params.vr_cycles_per_bit,
        })
        .collect();
    NetworkTopology::new(mecs, users, params.arena_side, params.fiber_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn single_node_topology() {
        let params = TopologyParams::<f64> {
            mecs: 1,
            users: 1,
            ..Default::default()
        };
        let topo = build_topology(&params, &mut rng::stream(1, rng::TOPOLOGY)).unwrap();
        assert_eq!(topo.num_mecs(), 1);
        assert_eq!(topo.num_users(), 1);
        assert_eq!(topo.fiber_distance(0, 0), 0.0);
    }

    #[test]
    fn default_topology_respects_ranges() {
        let params = TopologyParams::<f64>::default();
        let topo = build_topology(&params, &mut rng::stream(9, rng::TOPOLOGY)).unwrap();
        assert_eq!(topo.num_mecs(), 8);
        for m in &topo.mecs {
            assert!((0.0..=100.0).contains(&m.position.x));
            assert!((0.0..=100.0).contains(&m.position.y));
            assert!((4e9..=5e9).contains(&m.compute));
        }
        for u in &topo.users {
            assert!((0.0..=100.0).contains(&u.position.x));
            assert!((0.0..=100.0).contains(&u.position.y));
        }
        for i in 0..8 {
            assert_eq!(topo.fiber_distance(i, i), 0.0);
            for j in 0..8 {
                assert_eq!(topo.fiber_distance(i, j), topo.fiber_distance(j, i));
            }
        }
    }

    #[test]
    fn same_seed_same_topology() {
        let params = TopologyParams::<f64>::default();
        let a = build_topology(&params, &mut rng::stream(3, rng::TOPOLOGY)).unwrap();
        let b = build_topology(&params, &mut rng::stream(3, rng::TOPOLOGY)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_or_degenerate_arena() {
        let mut params = TopologyParams::<f64> {
            mecs: 0,
            ..Default::default()
        };
        assert!(build_topology(&params, &mut rng::stream(0, "t")).is_err());
        params.mecs = 2;
        params.arena_side = 0.0;
        assert!(build_topology(&params, &mut rng::stream(0, "t")).is_err());
    }

    #[test]
    fn unit_audit_of_default_parameters() {
        let phy = PhyParams::<f64>::default();
        // -110 dBm = 1e-11 mW = 1e-14 W
        assert!((phy.noise_power - 1e-14).abs() < 1e-26);
        let topo = TopologyParams::<f64>::default();
        assert!(topo.mec_compute_min >= 1e9 && topo.mec_compute_max <= 1e10);
        assert_eq!(topo.vr_compute, 2e9);
        assert_eq!(topo.fiber_rate, 1e10);
        let render = RenderingParams::<f64>::default();
        assert_eq!(render.latency_threshold, 0.03);
        assert_eq!(render.compression_ratio, 200.0);
    }

    #[test]
    fn fov_index_bounds() {
        assert!(FovIndex::new(7, 8).is_ok());
        assert!(FovIndex::new(8, 8).is_err());
    }
}
