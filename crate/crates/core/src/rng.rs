//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from ChaCha8, a counter-based
//! generator whose output is fixed by its 64-bit seed and 64-bit stream id on
//! every platform. Independent purposes (data, split, mini-batch) use distinct
//! stream ids under the same seed, so adding draws to one purpose never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream ids for the independent consumers of a replication seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const TEST_DATA: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const MODEL: u64 = 5;
}

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
