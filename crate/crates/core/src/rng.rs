//! Seeded random sources.
//!
//! Every random draw in the crate comes from a ChaCha8 generator, whose output
//! stream is stable across platforms and crate versions. Independent
//! consumers get their own ChaCha stream derived from a master seed, so the
//! order in which work is scheduled never changes the numbers drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for `seed` on a dedicated `stream`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the experiment pipeline. Streams are only meaningful
/// relative to one master seed.
pub mod streams {
    pub const WALKS: u64 = 1 << 40;
    pub const TRAIN: u64 = 2 << 40;
    pub const SHUFFLE: u64 = 3 << 40;
    pub const META_TEST: u64 = 4 << 40;
    pub const EVAL: u64 = 5 << 40;
    pub const HOLDOUT: u64 = 6 << 40;
    pub const LOSS: u64 = 7 << 40;
}
