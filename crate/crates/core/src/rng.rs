//! Seed derivation. Every stream is a `ChaCha8Rng` keyed by a 64-bit seed;
//! child seeds are derived deterministically from a parent seed and a tag so
//! that recursive samplers and parallel replicas stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed(pub u64);

impl StreamSeed {
    pub fn child(self, tag: u64) -> StreamSeed {
        StreamSeed(mix(self.0 ^ mix(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

pub fn stream(seed: u64) -> StreamRng {
    StreamSeed(seed).rng()
}
