//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, slot)`: a ChaCha8 generator
//! keyed by `seed`, switched to `stream`, read sequentially from slot 0.
//! Samples use their index as the stream, so a sample's spins do not depend
//! on how samples are distributed over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Streams at or above this value are reserved for parameter draws.
pub const PARAM_STREAM_BASE: u64 = 1 << 63;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The first `count` uniforms in `[0, 1)` of `(seed, stream)`.
pub fn uniforms(seed: u64, stream_id: u64, count: usize) -> Vec<f64> {
    let mut rng = stream(seed, stream_id);
    (0..count).map(|_| rng.random::<f64>()).collect()
}

/// Derive an independent seed for a labelled sub-experiment.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut rng = stream(seed, PARAM_STREAM_BASE | 0x5eed_0000 | label);
    rng.random()
}
