//! Seeded random streams.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by `(seed, index)`,
//! so results do not depend on execution order or on the number of worker
//! threads. Nested experiments derive child seeds with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The generator for replicate `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer applied to `seed ^ index`-style mixes.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for sub-task `index` of the task seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(
        mix64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15))
            ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93),
    )
}

/// A seed drawn from system entropy, for runs that did not pin one.
pub fn entropy_seed() -> u64 {
    rand::random()
}
