//! Counter-based random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha stream addressed by a
//! `(seed, stream)` pair. Replication seeds are derived from the base seed and
//! the replication index with a SplitMix64 finalizer, so any replication can be
//! regenerated in isolation and parallel execution never shares state.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream identifiers. Distinct ids give statistically independent sequences
/// even under the same seed.
pub mod streams {
    pub const PRETEST: u64 = 1;
    pub const LEARNING_RATE: u64 = 2;
    pub const PRETEST_ERROR: u64 = 3;
    pub const POSTTEST_ERROR: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a child index into a new, well-separated seed.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C909)))
}

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
