//! Counter-based random streams.
//!
//! Every random draw in the library comes from a stream keyed by
//! `(seed, kind, step, index)`, so results never depend on the order in which
//! worker threads pick up particles.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct kinds never share key space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamKind {
    Init = 1,
    Propagate = 2,
    Resample = 3,
    Simulate = 4,
    Predict = 5,
    Replicate = 6,
    Grid = 7,
    Iteration = 8,
}

#[derive(Clone, Debug)]
pub struct RandomStreams {
    seed: u64,
    base: ChaCha8Rng,
}

impl RandomStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `(kind, step, index)`.
    ///
    /// `step` must stay below 2^56. Each index owns 2^40 words of its stream.
    pub fn stream(&self, kind: StreamKind, step: u64, index: u64) -> ChaCha8Rng {
        debug_assert!(step < (1 << 56));
        let mut rng = self.base.clone();
        rng.set_stream(((kind as u64) << 56) | step);
        rng.set_word_pos((index as u128) << 40);
        rng
    }

    /// A child family of streams, e.g. one per optimizer iteration or replicate.
    pub fn child(&self, kind: StreamKind, step: u64) -> RandomStreams {
        RandomStreams::new(self.stream(kind, step, u64::MAX >> 24).next_u64())
    }
}
