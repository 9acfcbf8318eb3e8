//! Deterministic per-episode random streams.
//!
//! Every episode gets its own ChaCha8 generator keyed by
//! `(master_seed, stream, block)` and positioned on ChaCha stream
//! `episode`, so results do not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EpisodeRng = ChaCha8Rng;

/// Which part of an experiment consumes the randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Train = 1,
    Eval = 2,
    Baseline = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn episode_rng(master_seed: u64, stream: Stream, block: u64, episode: u64) -> EpisodeRng {
    let key = splitmix64(splitmix64(master_seed) ^ splitmix64(((stream as u64) << 48) ^ block));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(episode);
    rng
}
