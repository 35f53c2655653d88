//! Counter-keyed generators for Monte Carlo work.
//!
//! Replicate `r` of an experiment with seed `s` always draws from ChaCha8
//! keyed by `s` on stream `r`, so results do not depend on how replicates are
//! split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}
