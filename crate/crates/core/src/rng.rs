//! Reproducible random streams.
//!
//! A stream is an immutable `(master_seed, stream_index)` pair. The generator
//! behind it is ChaCha8 keyed by the master seed with the ChaCha stream word
//! set to the index, so every stream is a pure function of the pair and
//! distinct indices never overlap. Hierarchies (scenario, replicate,
//! covariate) are built with [`RngStream::child`], which folds the parent pair
//! into a fresh key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub const fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream {
            master_seed,
            stream_index,
        }
    }

    /// Derived stream `index` below this one.
    pub fn child(&self, index: u64) -> RngStream {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index ^ 0x5851_f42d_4c95_7f2d));
        RngStream::new(key, index)
    }

    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// FNV-1a, used to key scenario streams by id.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
