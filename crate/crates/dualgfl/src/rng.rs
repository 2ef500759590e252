//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream so that adding
//! draws to one component never perturbs another. Streams are derived from the
//! run seed plus a fixed stream id; results are reproducible across runs and
//! platforms (ChaCha output is platform-independent).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// Fixed stream ids, one per stochastic component.
pub mod streams {
    pub const TOPOLOGY: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const ROUND: u64 = 3;
    pub const LEARNER: u64 = 4;
}

/// A ChaCha generator seeded from `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-round generator: stream `base` offset by the round index.
pub fn round_rng(seed: u64, base: u64, round: u64) -> SimRng {
    // Stream ids are 64-bit; each base owns a 2^32 block, so per-round (and
    // per-round-per-client) offsets never collide across bases.
    stream_rng(seed, base.wrapping_mul(1 << 32).wrapping_add(round))
}
