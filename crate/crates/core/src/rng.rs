//! Reproducible random streams.
//!
//! Every Monte-Carlo task draws from its own ChaCha8 stream whose seed is a
//! SplitMix64 hash of `(experiment seed, key path)`. A replicate therefore sees
//! the same numbers no matter which thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Key used for the shared intensity realization of a replicate.
pub const INTENSITY_KEY: u64 = u64::MAX;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of a family of independent, addressable random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Streams {
    pub seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Stream addressed by a key path such as `[replicate, sequence]`.
    pub fn stream(&self, keys: &[u64]) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut acc = splitmix64(&mut state);
        for &k in keys {
            state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
            acc ^= splitmix64(&mut state);
            state = acc;
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }

    /// Child family for a sub-experiment, e.g. one row of a table.
    pub fn child(&self, key: u64) -> Streams {
        let mut state = self.seed ^ key.wrapping_mul(0xA24B_AED4_963E_E407);
        Streams {
            seed: splitmix64(&mut state),
        }
    }
}
