//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed and positioned on a 64-bit stream id. ChaCha is counter based,
//! so a `(seed, stream)` pair names an independent sequence that does not
//! depend on thread count, scheduling or how many draws other streams made.
//!
//! Stream ids are packed as `domain (8 bits) | major (24 bits) | minor (32 bits)`:
//! the domain separates uses (structure templates, replication latents,
//! splits, feedback, ...), `major` is usually the replication index and
//! `minor` a unit or component index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Values are part of the reproducibility contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Structure = 1,
    Factor = 2,
    Latent = 3,
    Unit = 4,
    Frailty = 5,
    Split = 6,
    Feedback = 7,
    Probe = 8,
    Test = 9,
}

/// Pack a stream id from its parts. `major` is truncated to 24 bits.
pub fn stream_id(domain: Domain, major: u64, minor: u32) -> u64 {
    ((domain as u64) << 56) | ((major & 0x00ff_ffff) << 32) | minor as u64
}

/// Generator for `(seed, domain, major, minor)`.
pub fn stream(seed: u64, domain: Domain, major: u64, minor: u32) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, major, minor));
    rng
}
