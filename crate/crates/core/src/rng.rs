//! Seeded random streams.
//!
//! Every replication gets one 64-bit seed; each consumer inside the replication
//! (environment dynamics, start-state draw, oracles) reads its own ChaCha
//! stream so that extra draws in one place never shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream identifiers within a single replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 0,
    StartState = 1,
    Agent = 2,
    Oracle = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replication `run` under `base`. Depends only on the pair, so adding
/// runs never changes the seeds of earlier ones.
pub fn derive_seed(base: u64, run: u64) -> u64 {
    splitmix64(base ^ splitmix64(run))
}
