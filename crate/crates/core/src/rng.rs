use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A reproducible random stream: identical `(seed, stream_id)` pairs give
/// identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A child stream keyed by `tag`; its own stream id is `index`.
    ///
    /// Children of distinct `(tag, index)` pairs are independent of each
    /// other and of the parent, and do not depend on how work is scheduled.
    pub fn substream(&self, tag: u64, index: u64) -> RngStream {
        let h = splitmix64(self.seed);
        let h = splitmix64(h ^ self.stream_id);
        let h = splitmix64(h ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        RngStream::new(h, index)
    }
}
