//! Random stream derivation.
//!
//! A run is identified by a [`RunKey`]. The environment (arrivals, link
//! moves, initial links) and the policy (exploration, random baseline) draw
//! from separate ChaCha8 streams of the same base seed, so two policies run
//! under the same key see identical exogenous paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

/// Position of a run in a sweep: grid point and replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub point: u64,
    pub replicate: u64,
}

impl RunKey {
    pub fn new(point: u64, replicate: u64) -> Self {
        Self { point, replicate }
    }

    fn stream(self, role: u64) -> u64 {
        // 31 bits of replicate are plenty; the point takes the rest.
        ((self.point << 32 | self.replicate) << 1) | role
    }
}

fn rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn env_rng(seed: u64, key: RunKey) -> SimRng {
    rng(seed, key.stream(0))
}

pub fn policy_rng(seed: u64, key: RunKey) -> SimRng {
    rng(seed, key.stream(1))
}
