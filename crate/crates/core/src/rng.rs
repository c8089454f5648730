//! The one pseudo-random generator used everywhere: ChaCha with 8 rounds,
//! seeded from a `u64`. Its output stream is fixed across platforms and
//! library versions, which keeps seeded runs reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream derived from `seed` and a label, so that different
/// consumers of one run seed do not share draws.
pub fn derived(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
