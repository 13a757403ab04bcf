//! Named-stream deterministic randomness.
//!
//! The scenario supplies one scalar seed; independent consumers (mobility
//! noise, radio loss) each get their own stream keyed by (seed, stream name)
//! so that adding a draw in one subsystem never shifts another's sequence.
//! ChaCha keeps output identical across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Factory for named streams derived from the scenario seed.
#[derive(Copy, Clone, Debug)]
pub struct RngRegistry {
    seed: u64,
}

impl RngRegistry {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> RngStream {
        let name_hash = fnv1a64(name.as_bytes());
        let salt = fnv1a64(&name_hash.to_le_bytes());
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&name_hash.to_le_bytes());
        key[16..24].copy_from_slice(&(self.seed ^ name_hash).to_le_bytes());
        key[24..32].copy_from_slice(&salt.to_le_bytes());
        RngStream {
            rng: ChaCha12Rng::from_seed(key),
        }
    }
}

/// One deterministic stream of uniform draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
