//! Seeded random streams.
//!
//! Every random draw in training comes from a ChaCha8 stream addressed by
//! `(seed, purpose, index)`, so a worker handling context `c` always sees the
//! same numbers no matter which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Keeps streams of different phases disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Negatives = 3,
    ItemEstimates = 4,
    ContextEstimates = 5,
    Split = 6,
    Synthetic = 7,
    Bench = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `index` within `(seed, purpose, round)`.
pub fn stream(seed: u64, purpose: Purpose, round: u64, index: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64((purpose as u64) << 48 ^ round));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
