//! Seed handling. Every random quantity in the crate is drawn from a
//! [`ChaCha8Rng`] built from a 64-bit seed, and independent streams are
//! obtained by deriving child seeds rather than sharing a generator.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for stream `tag` of `master`. Distinct tags give independent
/// streams; the result depends only on `(master, tag)`.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag);
    rng.next_u64()
}
