//! Named, seeded random streams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` whose seed is
//! derived from a parent seed plus a stream name (and optionally an index).
//! Changing how many numbers one stream consumes never shifts another stream,
//! so e.g. swapping the relation leaves the training-set selection untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives a child seed for the stream `name` at position `index`.
pub fn derive(parent: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a(name)).wrapping_add(index))
}

pub fn stream(parent: u64, name: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive(parent, name, 0))
}

pub fn rng_from(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
