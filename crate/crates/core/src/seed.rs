//! Splittable seed derivation.
//!
//! Every random stream in the simulator is identified by a path of labels
//! below a master seed, e.g. `master / "repeat" / 2 / "partition"`. A stream's
//! seed depends only on its own path, so adding a new stream (a new strategy,
//! a new client) never shifts the values drawn by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn root(seed: u64) -> Self {
        SeedPath(splitmix(seed ^ 0x5EED))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn with(self, label: &str) -> Self {
        let mut h = self.0;
        for &b in label.as_bytes() {
            h = splitmix(h ^ u64::from(b));
        }
        SeedPath(splitmix(h ^ label.len() as u64))
    }

    pub fn index(self, i: u64) -> Self {
        SeedPath(splitmix(splitmix(self.0 ^ 0xA5A5_A5A5) ^ i))
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}
