//! Seed derivation. Every random stream is ChaCha8 keyed by the master seed, with a
//! stream id built from a purpose tag (high 16 bits) and an index (low 48 bits).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Chain = 1,
    Initial = 2,
    Binomial = 3,
    Inner = 4,
    Probe = 5,
    Bootstrap = 6,
    Synthetic = 7,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}
