//! Seeded random streams. The simulator and the acting policy draw from
//! separate ChaCha streams of the same seed so that changing one never
//! shifts the other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIM_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const LATENT_STREAM: u64 = 4;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

pub fn sim_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, SIM_STREAM)
}

pub fn policy_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, POLICY_STREAM)
}

/// Stream for initialisation, batching and other training-side draws.
pub fn train_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, TRAIN_STREAM)
}

/// Stream for parameter initialisation.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, INIT_STREAM)
}

/// Stream for latent sampling and dropout masks during training.
pub fn latent_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, LATENT_STREAM)
}
