//! Seeded random streams.
//!
//! Every source of randomness is a ChaCha8 stream keyed by a 64-bit seed and
//! a stream id, so runs can be replayed and executed in any order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as RunRng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for run `index` of a sweep started from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(index))
}

/// Named sub-streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Queries = 2,
    TaskChain = 3,
    Tensor = 4,
    Oracle = 5,
    Synthetic = 6,
}

pub fn stream(seed: u64, which: Stream) -> RunRng {
    stream_id(seed, which as u64)
}

pub fn stream_id(seed: u64, id: u64) -> RunRng {
    let mut rng = RunRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
