//! Seed stream splitting.
//!
//! Every stochastic component draws from its own ChaCha8 stream derived from a master
//! seed, so enabling or reordering one component never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    World,
    Initialization,
    Observation,
    TieBreak,
    Restarts,
    RandomSelection,
    Clustering,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::World => 1,
            Stream::Initialization => 2,
            Stream::Observation => 3,
            Stream::TieBreak => 4,
            Stream::Restarts => 5,
            Stream::RandomSelection => 6,
            Stream::Clustering => 7,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(seed, index)`; used to fan a base seed out over replications.
pub fn derive(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ index.wrapping_mul(0xd605_bbb5_8c8a_bd33))
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive(seed, which.tag() << 56))
}
