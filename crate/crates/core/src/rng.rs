//! Named random streams derived from a single master seed.
//!
//! Each stream is a ChaCha20 generator keyed by the master seed with a fixed
//! stream id, so two consumers never share draws and adding a consumer never
//! shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    NoiseX,
    NoiseY,
    Perturbation,
    ObstaclePlacement,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::NoiseX => 1,
            Stream::NoiseY => 2,
            Stream::Perturbation => 3,
            Stream::ObstaclePlacement => 4,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Seed for the `index`-th run of a batch (splitmix64 over a counter).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
