//! Seeding and substream conventions.
//!
//! All randomized operations take an explicit [`RngSeed`] and derive
//! ChaCha streams from it. ChaCha exposes 2^64 independent streams per
//! seed, which gives replicates (bootstrap draws, simulation trials)
//! their own substream so that results do not depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A 64-bit seed. Identical seeds yield identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// The root generator (stream 0).
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// An independent generator for substream `stream`.
    pub fn substream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    /// Substream keyed by a (coarse, fine) pair, e.g. (date, replicate).
    ///
    /// Coarse indices above 2^32 would alias; none of the callers get
    /// anywhere near that.
    pub fn substream2(&self, coarse: u64, fine: u64) -> ChaCha8Rng {
        self.substream((coarse << 32) ^ fine)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}
