//! Counter-based labelled random streams.
//!
//! A stream is identified by `(master_seed, stream_label, counter)`; the
//! generator it yields depends on nothing else, so work can be split across
//! threads in any order without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_label: String,
    pub counter: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, label: impl Into<String>) -> Self {
        Self {
            master_seed,
            stream_label: label.into(),
            counter: 0,
        }
    }

    /// Child stream whose label is `parent/label`.
    pub fn substream(&self, label: &str) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_label: format!("{}/{}", self.stream_label, label),
            counter: self.counter,
        }
    }

    pub fn with_counter(&self, counter: u64) -> Self {
        Self {
            counter,
            ..self.clone()
        }
    }

    fn seed(&self) -> [u8; 32] {
        let label = fnv1a(self.stream_label.as_bytes());
        let mut state = splitmix64(self.master_seed ^ splitmix64(label));
        state = splitmix64(state ^ self.counter.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        seed
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.seed())
    }
}
