//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator seeded with
//! `ChaCha8Rng::seed_from_u64`. A run has one master seed; the seeds of the
//! individual stages are the first output word of the master generator on a
//! fixed ChaCha stream id per stage, so stages never share a random sequence.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named consumers of randomness, with their ChaCha stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Cv = 2,
    Lda = 3,
    Boost = 4,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

/// The per-stage seeds fanned out from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub master: u64,
    pub split: u64,
    pub cv: u64,
    pub lda: u64,
    pub boost: u64,
}

impl StreamSeeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            split: derive_seed(master, Stream::Split),
            cv: derive_seed(master, Stream::Cv),
            lda: derive_seed(master, Stream::Lda),
            boost: derive_seed(master, Stream::Boost),
        }
    }
}

/// A uniformly random permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx
}
