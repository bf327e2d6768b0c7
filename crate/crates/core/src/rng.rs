//! Splittable, counter-addressed random streams.
//!
//! A [`RandomSource`] is a 64-bit seed. `substream(i)` is a ChaCha8 generator
//! keyed by the seed with stream id `i`, so the draws used by step `i` of a
//! chain depend only on `(seed, i)` and never on how earlier steps consumed
//! randomness. `split(j)` derives an independent seed for replica `j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    pub fn split(&self, child: u64) -> RandomSource {
        RandomSource::new(splitmix64(self.seed ^ splitmix64(child)))
    }
}
