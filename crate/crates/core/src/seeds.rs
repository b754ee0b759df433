//! Derived seed streams.
//!
//! Everything random in this crate runs off ChaCha8, seeded through
//! [`mix`] so that independent consumers (instance generation, policy
//! init, episode sampling, batch shuffling, evaluation) draw from
//! disjoint, reproducible streams of one master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each consumer of randomness gets its own tag so streams
/// never collide even when derived from the same master seed.
pub mod tags {
    pub const EFFORTS: u64 = 0x45_46;
    pub const WEIGHTS: u64 = 0x57_54;
    pub const DEMANDS: u64 = 0x44_4d;
    pub const COSTS: u64 = 0x43_4f;
    pub const VALUES: u64 = 0x56_41;
    pub const COORDS: u64 = 0x58_59;
    pub const INIT: u64 = 0x49_4e;
    pub const EPISODE: u64 = 0x45_50;
    pub const ACTION: u64 = 0x41_43;
    pub const SHUFFLE: u64 = 0x53_48;
    pub const EVAL: u64 = 0x45_56;
    pub const PERTURB: u64 = 0x50_54;
    pub const GRADCHECK: u64 = 0x47_43;
    pub const SELFTEST: u64 = 0x53_54;
    pub const SCALE: u64 = 0x53_43;
}

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a sub-seed from a master seed and a stream tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Derive a sub-seed indexed within a stream (episode i, eval seed i, ...).
pub fn mix_indexed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(mix(seed, tag).wrapping_add(splitmix64(index)))
}

/// The crate-wide deterministic generator (ChaCha8: seedable, portable,
/// documented keystream).
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
