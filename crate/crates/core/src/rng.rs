//! Named random sub-streams derived from one experiment seed.
//!
//! Every consumer of randomness asks for its own labelled stream, so changing
//! how much one consumer draws never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const TOPOLOGY: &str = "topology";
pub const MOBILITY: &str = "mobility";
pub const CHANNEL: &str = "channel";
pub const PREDICTOR_DATA: &str = "predictor-data";
pub const PREDICTOR_INIT: &str = "predictor-init";
pub const AGENT_INIT: &str = "agent-init";
pub const EXPLORATION: &str = "exploration";
pub const REPLAY: &str = "replay";
pub const EVALUATION: &str = "evaluation";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Stream `label` of the generator seeded with `seed`.
pub fn stream(seed: u64, label: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

/// Stream `label` for the `index`-th member of a family (e.g. one per agent).
pub fn indexed_stream(seed: u64, label: &str, index: usize) -> SimRng {
    stream(seed, &format!("{label}/{index}"))
}

/// Standard normal draw.
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}
