//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(master seed, purpose, index)`. Work split across threads therefore
//! produces the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags keep the substreams of different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Transform = 1,
    Sample = 2,
    Cluster = 3,
    Permute = 4,
    Folds = 5,
    Covariates = 6,
    Generate = 7,
    ZeroInflation = 8,
    Source = 9,
    Replicate = 10,
    Knockoff = 11,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed; used to chain seeds through nested stages.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(purpose as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn substream(master: u64, purpose: Purpose, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, index))
}
