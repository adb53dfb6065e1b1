//! Seed splitting.
//!
//! All randomness derives from one root seed. A child stream is identified by
//! a label (the consuming module or artifact) and a counter (run, chunk or
//! cell index); the child seed is the SplitMix64 finaliser applied to the root
//! mixed with an FNV-1a hash of the label and the counter. Children are
//! independent of thread count and of the order in which they are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive the seed of child stream `(label, counter)` from `root`.
pub fn child_seed(root: u64, label: &str, counter: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a(label)).wrapping_add(splitmix64(counter)))
}

pub fn child_rng(root: u64, label: &str, counter: u64) -> SimRng {
    SimRng::seed_from_u64(child_seed(root, label, counter))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
