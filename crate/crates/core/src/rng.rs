//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`). A root
//! seed is split into independent streams by hashing `(seed, domain, index)`
//! with SplitMix64, so that e.g. the dropout mask of user 3 in batch 7 does not
//! depend on how many draws other users consumed or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed for `domain` / `index` from a root seed.
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for b in domain.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, domain: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, domain, index))
}
