//! Seeded random streams.
//!
//! All stochastic code draws from [`Rng`], ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`) seeded through `seed_from_u64`. Independent
//! consumers (one per series, one per grid cell) take distinct streams of
//! the same seed so that results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of generator `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}
