//! Seed handling.
//!
//! Every random stream in the crate is a ChaCha8 keystream keyed from a
//! 64-bit seed, so a computation is fully determined by the seeds it is
//! handed. Per-unit seeds for experiment grids are derived with
//! [`unit_seed`], a fixed SplitMix64 chain over
//! `(seed_root, fnv1a64(experiment_id), n, replicate)`. Adding rows or
//! columns to a grid never changes the seed of an existing cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One step of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a seed with a tag into an independent-looking child seed.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.rotate_left(17))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed of one `(experiment, n, replicate)` cell.
pub fn unit_seed(seed_root: u64, experiment_id: &str, n: u64, replicate: u64) -> u64 {
    let mut h = splitmix64(seed_root);
    h = splitmix64(h ^ fnv1a64(experiment_id.as_bytes()));
    h = splitmix64(h ^ n);
    splitmix64(h ^ replicate)
}
