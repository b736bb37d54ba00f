//! Reproducible random streams for Monte Carlo replications.
//!
//! Each replication draws from its own ChaCha8 stream: the seed fixes the key
//! and the replication index selects the 64-bit stream id. ChaCha is counter
//! based, so stream `r` is the same sequence no matter which thread runs it
//! or in which order replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream number `replication_index` under key `seed`.
pub fn rng_stream_for(seed: u64, replication_index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication_index);
    rng
}

/// Mixes a base seed with a label (e.g. an agent count) into a fresh seed.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
