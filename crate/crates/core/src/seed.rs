//! Counter-based, splittable seeding.
//!
//! Every Monte Carlo replication draws from its own ChaCha stream keyed by
//! `(master seed, stream id)`, so replication `r` can be regenerated in
//! isolation and results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Generator for replication `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream);
        rng
    }

    /// Independent child seed space for a named sub-experiment.
    pub fn child(&self, tag: u64) -> SeedStream {
        SeedStream::new(splitmix64(self.master ^ splitmix64(tag.wrapping_add(0x6a09_e667_f3bc_c909))))
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
