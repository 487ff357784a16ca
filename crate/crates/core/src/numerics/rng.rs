//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! a counter-based stream cipher generator with a published, platform
//! independent output sequence. A generator is addressed by a `(seed, stream)`
//! pair: the 64-bit seed is expanded with `SeedableRng::seed_from_u64` and the
//! 64-bit stream id selects one of ChaCha's independent nonce streams. Purposes
//! that must not perturb each other (dropout in step 17, the shuffle of epoch 3,
//! the noise of clip 12) use distinct stream ids, so adding draws in one place
//! never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream-id namespaces. The high 16 bits name the purpose, the low 48 bits
/// carry an index (step, epoch, clip, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    TrainStep = 3,
    Synthetic = 4,
    Noise = 5,
    Encoder = 6,
    Fuzz = 7,
}

/// Generator for `(seed, purpose, index)`.
pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}
