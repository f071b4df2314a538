//! Reproducible random streams.
//!
//! Every stochastic quantity draws from a ChaCha8 generator keyed by the run
//! seed. ChaCha is counter based and carries a 64-bit stream id, so each
//! (run, channel) pair gets its own non-overlapping substream regardless of
//! how sweep cells are scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Substream for `(run, channel)` under the master `seed`.
pub fn substream(seed: u64, run: u32, channel: u32) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run as u64) << 32) | channel as u64);
    rng
}

/// One standard-normal draw.
#[inline]
pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
