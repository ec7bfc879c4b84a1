//! Keyed random streams.
//!
//! Every random draw in a simulation is taken from a generator derived from a
//! [`StreamKey`] plus a small coordinate (agent, iteration). Draws for one
//! coordinate never depend on how many draws were made for another, so the
//! result of a batch is a pure function of its key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream labels used by the crate.
pub mod label {
    pub const FEATURES: u64 = 0x01;
    pub const DATA: u64 = 0x02;
    pub const NOISE: u64 = 0x03;
    pub const THETA: u64 = 0x04;
    pub const SUBSAMPLE: u64 = 0x05;
    pub const GRAM: u64 = 0x06;
    pub const RUN: u64 = 0x07;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub const fn new(seed: u64) -> Self {
        StreamKey(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Derives an independent sub-stream.
    pub fn child(self, label: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    /// Key for Monte-Carlo run `run` under a master seed.
    pub fn for_run(master_seed: u64, run: usize) -> Self {
        StreamKey::new(master_seed).child(label::RUN).child(run as u64)
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }

    /// Generator for one (agent, iteration) coordinate of this stream.
    pub fn rng_at(self, agent: usize, t: u64) -> SimRng {
        self.child(agent as u64).child(t).rng()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
