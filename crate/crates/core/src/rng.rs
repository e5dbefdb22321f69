//! Counter-based rng stream derivation.
//!
//! Every random decision in an experiment draws from a stream keyed by the
//! master seed plus a short tuple of counters (purpose, fold, epoch, ...).
//! Streams never depend on the experiment configuration, so two configs that
//! differ only in unused axes consume identical randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purposes that get their own stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Folds = 2,
    Oversample = 3,
    Init = 4,
    Noise = 5,
    Shuffle = 6,
    Synth = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the rng for `(master, purpose, counters...)`.
pub fn stream(master: u64, purpose: Purpose, counters: &[u64]) -> StreamRng {
    let mut key = splitmix64(master ^ splitmix64(purpose as u64));
    for &c in counters {
        key = splitmix64(key ^ splitmix64(c.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    let mut seed = [0u8; 32];
    let mut state = key;
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
