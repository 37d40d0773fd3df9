//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`SeededStream`]: a
//! `(seed, stream_id)` pair that keys a ChaCha12 generator
//! (`rand_chacha::ChaCha12Rng`). The seed fills the 256-bit key through
//! `SeedableRng::seed_from_u64`; the stream id selects the ChaCha stream
//! (nonce), so distinct ids give independent sequences under one seed. ChaCha
//! is a counter-based cipher, which makes the sequences identical across runs
//! and platforms.
//!
//! Sub-streams are derived with [`SeededStream::child`], which mixes the parent
//! id with an index through SplitMix64. Operations never share a generator;
//! each takes a stream by reference and instantiates its own.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The generator type every stream instantiates.
pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream 0 under `seed`.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Deterministic sub-stream selected by `index`.
    pub fn child(&self, index: u64) -> SeededStream {
        let mixed = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        SeededStream::new(self.seed, mixed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
