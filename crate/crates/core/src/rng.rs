//! Reproducible random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(seed, client, round, stage)`, so results do not depend on the order in
//! which clients or rounds are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct stages never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Dataset = 1,
    Learning = 2,
    Verification = 3,
    Problem = 4,
    Baseline = 5,
    Test = 6,
    Quantization = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub client: u64,
    pub round: u64,
    pub stage: Stage,
}

impl StreamId {
    pub fn new(seed: u64, client: usize, round: usize, stage: Stage) -> Self {
        StreamId {
            seed,
            client: client as u64,
            round: round as u64,
            stage,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = splitmix64(self.seed ^ 0x5eed_c4a7_7e40_0001);
        let mut key = [0u8; 32];
        let words = [
            self.client,
            self.round,
            self.stage as u64,
            0x9e37_79b9_7f4a_7c15,
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            state = splitmix64(state ^ w);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

pub fn stream(seed: u64, client: usize, round: usize, stage: Stage) -> StreamRng {
    StreamId::new(seed, client, round, stage).rng()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
