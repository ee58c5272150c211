//! Seeding conventions.
//!
//! Every random quantity in the crate is drawn from ChaCha20 (as implemented
//! by `rand_chacha` 0.9) seeded through [`split_seed`], so a single user-facing
//! seed fans out into independent, reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier of the generator, recorded in reports.
pub const PRNG_NAME: &str = "chacha20/rand_chacha-0.9/splitmix64-split-v1";

/// Derives the seed of sub-stream `stream` from `seed`.
///
/// Two rounds of splitmix64 finalisation over `seed` and `stream`; the map is
/// fixed and documented so downstream tools can reproduce any sample.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
