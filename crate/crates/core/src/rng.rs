//! Seeded, splittable random streams.
//!
//! A [`RngStream`] is a `(seed, stream)` key for a ChaCha8 generator. The
//! stream id selects one of 2^64 independent ChaCha streams for the same key,
//! so a replicate, bootstrap chain or record can get its own generator from
//! its index alone. Nothing depends on which thread happens to run the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derive the child stream `index` of this stream.
    ///
    /// The child key mixes `(seed, stream)` through SplitMix64, and `index`
    /// becomes the child's ChaCha stream id. Children of distinct parents
    /// land on distinct keys with overwhelming probability.
    pub fn substream(&self, index: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::new(key, index)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
