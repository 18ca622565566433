//! Seeded random substreams.
//!
//! Every simulation draws from one root seed. A path index and a
//! [`Substream`] label select an independent ChaCha stream, so changing one
//! source of randomness (say, the signal intensity) leaves the others
//! untouched, and path results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random sources used by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Regime = 0,
    Brownian = 1,
    Arrivals = 2,
    Marks = 3,
    InitialRegime = 4,
    /// Diffusion noise of dual/auxiliary paths.
    DualDiffusion = 5,
    DualArrivals = 6,
    DualMarks = 7,
}

const STREAMS_PER_PATH: u64 = 8;

/// Root seed plus path index; hands out the per-source generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStreams {
    pub seed: u64,
    pub path: u64,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    pub fn rng(&self, stream: Substream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path.wrapping_mul(STREAMS_PER_PATH) + stream as u64);
        rng
    }
}

/// Derives a root seed for a named estimator so that two estimators run with
/// the same user seed do not share paths.
pub fn derive_seed(seed: u64, salt: &str) -> u64 {
    // FNV-1a over the salt, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
