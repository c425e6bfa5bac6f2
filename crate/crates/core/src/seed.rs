//! Master-seed expansion.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! one master seed, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream identifiers. Values are part of the reproducibility contract.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const RESAMPLE_TRAIN: u64 = 3;
    pub const RESAMPLE_VAL: u64 = 4;
    pub const MINIBATCH: u64 = 5;
    pub const ENCODER: u64 = 6;
    pub const CONTROLLER: u64 = 7;
    pub const SYNTH: u64 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Independent generator for `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream);
        rng
    }

    /// Generator for the `index`-th member of a stream family (e.g. episode i).
    pub fn rng_indexed(&self, stream: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.master ^ splitmix(index)));
        rng.set_stream(stream);
        rng
    }

    /// Child seed for an integer-seeded consumer such as k-means.
    pub fn derive(&self, stream: u64, index: u64) -> u64 {
        splitmix(self.master ^ splitmix(stream.wrapping_mul(0x9E37_79B9) ^ index))
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
