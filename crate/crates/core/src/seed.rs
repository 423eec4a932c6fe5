//! Seed management.
//!
//! A single master seed reproduces a whole run. Components draw from
//! independent ChaCha8 streams of the master seed, selected with
//! [`Stream`]: the word stream of a ChaCha generator is a second 64-bit
//! counter, so `(master, stream)` pairs never overlap. Per-call seeds (one
//! per randomized factorization) are derived from a component stream with
//! [`derive`], a SplitMix64 finalizer over `base + index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InitialState = 1,
    Rsvd = 2,
    Synthetic = 3,
}

pub fn substream(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 mix of `base + index`.
pub fn derive(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
