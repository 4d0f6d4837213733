//! Data sizes, per-component latencies, interaction latency and PSNR QoE.

use crate::error::{Error, Result};
use crate::model::{FovIndex, RenderingParams};
use crate::scalar::Scalar;

/// Latency reported for a link with zero rate. Finite so sums stay usable.
pub const UNREACHABLE_LATENCY_S: f64 = 1e9;

/// Bits of one rendered FoV: `R^2 * 3 * bits_per_pixel * viewpoints`.
pub fn fov_bits<T: Scalar>(params: &RenderingParams<T>) -> Result<T> {
    if !(params.resolution > T::zero()) {
        return Err(Error::InvalidParameter("resolution must be positive".into()));
    }
    let r = params.resolution;
    Ok(r * r * T::lit(3.0 * f64::from(params.bits_per_pixel) * f64::from(params.viewpoints)))
}

/// Bits of the stitched 2D frame, four thirds of one FoV.
pub fn stitched_bits<T: Scalar>(params: &RenderingParams<T>) -> Result<T> {
    Ok(fov_bits(params)? * T::lit(4.0) / T::lit(3.0))
}

pub fn render_time<T: Scalar>(bits: T, cycles_per_bit: T, compute: T) -> T {
    cycles_per_bit * bits / compute
}

pub fn migration_time<T: Scalar>(distance: T, fiber_rate: T) -> T {
    distance / fiber_rate
}

/// Downlink delivery time of `bits` compressed by `compression_ratio`.
pub fn downlink_time<T: Scalar>(bits: T, compression_ratio: T, rate: T) -> T {
    if !(rate > T::zero()) {
        return T::lit(UNREACHABLE_LATENCY_S);
    }
    bits / (compression_ratio * rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MecNoMigration,
    MecMigration,
    VrDevice,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::MecNoMigration, Scheme::MecMigration, Scheme::VrDevice];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MecNoMigration => "mec-no-migration",
            Scheme::MecMigration => "mec-migration",
            Scheme::VrDevice => "vr-device",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidScheme(s.to_string()))
    }
}

/// Whether the user's FoV is rendered by its serving MEC or migrated from
/// another one over fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Role<T> {
    RendersItself,
    ReceivesMigration { distance: T },
}

/// Per-user quantities fed into the interaction latency.
///
/// `cycles_per_bit`/`compute` belong to whichever node renders: the serving
/// MEC, the remote rendering MEC, or the headset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyInputs<T> {
    pub cycles_per_bit: T,
    pub compute: T,
    pub downlink_rate: T,
    pub fiber_rate: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyBreakdown<T> {
    pub uplink: T,
    pub render: T,
    pub migration: T,
    pub downlink: T,
    pub total: T,
}

impl<T: Scalar> LatencyBreakdown<T> {
    pub fn new(uplink: T, render: T, migration: T, downlink: T) -> Self {
        Self {
            uplink,
            render,
            migration,
            downlink,
            total: uplink + render + migration + downlink,
        }
    }
}

/// End-to-end interaction latency of one user.
///
/// MEC schemes render the stitched frame and send one FoV; the headset scheme
/// receives the stitched frame and renders locally. With `predicted` the
/// request is known ahead of time and the uplink term is zero.
pub fn interaction_latency<T: Scalar>(
    scheme: Scheme,
    predicted: bool,
    role: Role<T>,
    params: &RenderingParams<T>,
    inputs: &LatencyInputs<T>,
) -> Result<LatencyBreakdown<T>> {
    let uplink = if predicted { T::zero() } else { params.uplink_latency };
    let c = fov_bits(params)?;
    let m = stitched_bits(params)?;
    let render = render_time(m, inputs.cycles_per_bit, inputs.compute);
    let migration = match (scheme, role) {
        (_, Role::RendersItself) => T::zero(),
        (Scheme::MecMigration, Role::ReceivesMigration { distance }) => {
            migration_time(distance, inputs.fiber_rate)
        }
        (other, Role::ReceivesMigration { .. }) => {
            return Err(Error::InvalidScheme(format!(
                "migration role is only valid under mec-migration, not {}",
                other.name()
            )))
        }
    };
    let payload = match scheme {
        Scheme::VrDevice => m,
        Scheme::MecNoMigration | Scheme::MecMigration => c,
    };
    let downlink = downlink_time(payload, params.compression_ratio, inputs.downlink_rate);
    Ok(LatencyBreakdown::new(uplink, render, migration, downlink))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoeSample<T> {
    pub mse: T,
    pub psnr: T,
    pub delta: T,
}

/// Thresholded PSNR: on time (inclusive) gives `10 log10((1 + delta) / delta)`,
/// late gives 0 dB.
pub fn psnr<T: Scalar>(total_latency: T, threshold: T, delta: T) -> QoeSample<T> {
    let on_time = if total_latency <= threshold { T::one() } else { T::zero() };
    let mse = (T::one() - on_time).powi(2);
    let psnr = T::lit(10.0) * ((T::one() + delta) / (mse + delta)).log10();
    QoeSample { mse, psnr, delta }
}

/// PSNR of a slot served on time.
pub fn on_time_psnr<T: Scalar>(delta: T) -> T {
    psnr(T::zero(), T::zero(), delta).psnr
}

/// Percentage of slots where the prediction matches the actual FoV.
pub fn prediction_accuracy(actual: &[FovIndex], predicted: &[FovIndex]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} actual vs {} predicted FoVs",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("no slots to score".into()));
    }
    let hits = actual.iter().zip(predicted).filter(|(a, p)| a == p).count();
    Ok(100.0 * hits as f64 / actual.len() as f64)
}

/// Mean relative index error `(F - F~) / F` in percent, with 1-based indices.
/// Zero for perfect prediction; kept as a diagnostic next to the hit rate.
pub fn relative_index_error(actual: &[FovIndex], predicted: &[FovIndex]) -> Result<f64> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::ShapeMismatch("sequences must be equal and non-empty".into()));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let a = (a.value() + 1) as f64;
            let p = (p.value() + 1) as f64;
            (a - p) / a
        })
        .sum();
    Ok(100.0 * sum / actual.len() as f64)
}

/// Discounted return `sum_t gamma^t * rewards[t]`; the first reward is undiscounted.
pub fn episode_return<T: Scalar>(rewards: &[T], gamma: T) -> T {
    let mut weight = T::one();
    let mut acc = T::zero();
    for r in rewards {
        acc += weight * *r;
        weight *= gamma;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(resolution: f64) -> RenderingParams<f64> {
        RenderingParams {
            resolution,
            ..RenderingParams::default()
        }
    }

    fn fovs(v: &[usize]) -> Vec<FovIndex> {
        v.iter().map(|&i| FovIndex::new(i, 8).unwrap()).collect()
    }

    #[test]
    fn data_sizes() {
        assert_eq!(fov_bits(&params(10.0)).unwrap(), 4800.0);
        assert_eq!(fov_bits(&params(1080.0)).unwrap(), 55_987_200.0);
        assert_eq!(stitched_bits(&params(10.0)).unwrap(), 6400.0);
        assert_eq!(stitched_bits(&params(1080.0)).unwrap(), 74_649_600.0);
        assert!(fov_bits(&params(0.0)).is_err());
    }

    #[test]
    fn component_times() {
        assert_eq!(render_time(1e6, 1000.0, 1e9), 1.0);
        assert_eq!(render_time(0.0, 1000.0, 1e9), 0.0);
        assert_eq!(render_time(1e6, 1000.0, 2.5e9), 2.0 * render_time(1e6, 1000.0, 5e9));
        assert_eq!(migration_time(0.0, 1e10), 0.0);
        assert_eq!(migration_time(100.0, 1e10), 1e-8);
        assert!((downlink_time(4800.0f64, 200.0, 1e6) - 2.4e-5).abs() < 1e-18);
        assert_eq!(downlink_time(4800.0, 1.0, 1e6), 4800.0 / 1e6);
        assert_eq!(downlink_time(4800.0, 200.0, 0.0), UNREACHABLE_LATENCY_S);
    }

    fn inputs(compute: f64) -> LatencyInputs<f64> {
        LatencyInputs {
            cycles_per_bit: 1000.0,
            compute,
            downlink_rate: 1e6,
            fiber_rate: 1e10,
        }
    }

    #[test]
    fn headset_rendering_with_prediction() {
        let p = params(10.0);
        let l = interaction_latency(Scheme::VrDevice, true, Role::RendersItself, &p, &inputs(2e9)).unwrap();
        assert_eq!(l.uplink, 0.0);
        assert!((l.downlink - 3.2e-5).abs() < 1e-18);
        assert!((l.render - 3.2e-3).abs() < 1e-15);
        assert_eq!(l.total, l.uplink + l.render + l.migration + l.downlink);
    }

    #[test]
    fn migration_to_self_reduces_to_no_migration() {
        let p = params(10.0);
        let a = interaction_latency(Scheme::MecMigration, true, Role::ReceivesMigration { distance: 0.0 }, &p, &inputs(4e9)).unwrap();
        let b = interaction_latency(Scheme::MecMigration, true, Role::RendersItself, &p, &inputs(4e9)).unwrap();
        assert_eq!(a, b);
        let far = interaction_latency(Scheme::MecMigration, true, Role::ReceivesMigration { distance: 50.0 }, &p, &inputs(4e9)).unwrap();
        assert!((far.total - b.total - 50.0 / 1e10).abs() < 1e-15);
        assert_eq!(far.migration, 50.0 / 1e10);
    }

    #[test]
    fn uplink_adds_exactly() {
        let p = params(10.0);
        let with = interaction_latency(Scheme::MecNoMigration, true, Role::RendersItself, &p, &inputs(4e9)).unwrap();
        let without = interaction_latency(Scheme::MecNoMigration, false, Role::RendersItself, &p, &inputs(4e9)).unwrap();
        assert!((without.total - with.total - 0.010).abs() < 1e-15);
    }

    #[test]
    fn migration_role_outside_migration_scheme_is_rejected() {
        let p = params(10.0);
        let role = Role::ReceivesMigration { distance: 1.0 };
        assert!(interaction_latency(Scheme::MecNoMigration, true, role, &p, &inputs(4e9)).is_err());
        assert!(interaction_latency(Scheme::VrDevice, true, role, &p, &inputs(4e9)).is_err());
    }

    #[test]
    fn psnr_levels() {
        let on = psnr(0.01f64, 0.03, 1.0);
        assert_eq!(on.mse, 0.0);
        assert!((on.psnr - 3.010_299_956_639_812).abs() < 1e-12);
        let late = psnr(0.05, 0.03, 1.0);
        assert_eq!((late.mse, late.psnr), (1.0, 0.0));
        assert_eq!(psnr(0.03, 0.03, 1.0).mse, 0.0);
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(prediction_accuracy(&fovs(&[1, 2, 3]), &fovs(&[1, 2, 3])).unwrap(), 100.0);
        assert_eq!(prediction_accuracy(&fovs(&[1, 2]), &fovs(&[0, 0])).unwrap(), 0.0);
        assert_eq!(prediction_accuracy(&fovs(&[1, 2, 3, 4]), &fovs(&[1, 2, 3, 0])).unwrap(), 75.0);
        assert!(prediction_accuracy(&fovs(&[1]), &fovs(&[])).is_err());
        assert_eq!(relative_index_error(&fovs(&[3, 4]), &fovs(&[3, 4])).unwrap(), 0.0);
        // (2 - 1) / 2 = 0.5 for the single slot
        assert_eq!(relative_index_error(&fovs(&[1]), &fovs(&[0])).unwrap(), 50.0);
    }

    #[test]
    fn discounted_returns() {
        assert_eq!(episode_return(&[2.0f64, 5.0, 7.0], 0.0), 2.0);
        assert_eq!(episode_return::<f64>(&[], 0.9), 0.0);
        let long = vec![1.5f64; 1000];
        assert!((episode_return(&long, 0.9) - 1.5 / 0.1).abs() < 1e-6);
    }

    #[test]
    fn single_precision_matches() {
        let p = RenderingParams::<f32> {
            resolution: 10.0,
            ..RenderingParams::default()
        };
        assert_eq!(fov_bits(&p).unwrap(), 4800.0f32);
        assert_eq!(episode_return(&[1.0f32, 2.0, 0.5], 1.0), 3.5);
    }
}
