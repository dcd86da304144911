//! Seed lineage for reproducible parallel Monte Carlo.
//!
//! Every stochastic operation receives an explicit stream. Streams are
//! derived from a root seed by hashing a path of keys, e.g.
//! `(replicate, period, purpose)`, so any single period of any replicate
//! can be regenerated in isolation and independently of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

/// Purpose tags used as the last path element of a stream.
pub mod purpose {
    pub const CONFOUNDER_3: u64 = 0x0c3;
    pub const CONFOUNDER_4: u64 = 0x0c4;
    pub const TREATMENT: u64 = 0x7e;
    pub const OUTCOME: u64 = 0x0e;
    pub const TRUTH: u64 = 0x77;
    pub const VARIANCE: u64 = 0x7a;
    pub const DATASET: u64 = 0xda;
    pub const INTERVENTION: u64 = 0x1a;
    pub const CALIBRATION: u64 = 0xca;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree(splitmix(root))
    }

    pub fn child(self, key: u64) -> Self {
        SeedTree(splitmix(self.0 ^ splitmix(key.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn path(self, keys: &[u64]) -> Self {
        keys.iter().fold(self, |s, k| s.child(*k))
    }

    pub fn stream(self) -> Stream {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}
