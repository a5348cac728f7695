//! Reproducible random-number streams.
//!
//! Every stochastic routine takes an explicit generator. An [`RngStream`] names
//! one independent ChaCha8 stream: the 64-bit seed fixes the key and the stream id
//! selects one of 2^64 non-overlapping sequences under that key, so parallel chains
//! derive independent generators from a single user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A child stream, deterministic in (self, index).
    pub fn derive(&self, index: u64) -> RngStream {
        // splitmix64 finalizer keeps nearby (stream, index) pairs far apart
        let mut z = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        RngStream {
            seed: self.seed,
            stream: z,
        }
    }
}
