//! Seeded random streams.
//!
//! A stream is a ChaCha8 generator seeded from the master seed with its 64-bit
//! stream id set from a hash of a structured key, e.g. `(time, cell, control)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key into a 64-bit value.
pub fn mix(key: &[u64]) -> u64 {
    key.iter()
        .fold(0x6A09_E667_F3BC_C908u64, |h, &k| splitmix(h ^ splitmix(k)))
}

/// Independent stream for `key` under `seed`.
pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix(key));
    rng
}

/// Derives a child seed, used to hand separate seeds to sub-experiments.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    splitmix(seed ^ mix(key))
}
