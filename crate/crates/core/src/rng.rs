//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream, keyed by the
//! run seed and a fixed stream id, so adding draws to one component never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const TOPOLOGY: u64 = 1;
pub const CHANNEL: u64 = 2;
pub const POLICY_TRAIN: u64 = 3;
pub const POLICY_INFER: u64 = 4;
pub const PANEL: u64 = 5;
pub const INIT: u64 = 6;
pub const LATENT_JITTER: u64 = 7;
pub const BRANCH: u64 = 8;
pub const DIRICHLET: u64 = 9;

pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
