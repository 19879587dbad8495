//! Seed splitting. Every random stream in the crate is derived from a master
//! seed and a fixed textual label, so changing one parameter (say θ) leaves
//! the other streams untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label for initial spin sampling.
pub const INITIAL: &str = "initial";
/// Stream label for per-vertex Poisson clocks.
pub const CLOCK: &str = "clock";
/// Stream label for tie-breaking coins.
pub const COIN: &str = "coin";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed from `master`, a label and a list of integer indices.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ fnv1a(label));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

/// A ChaCha8 stream for `(master, label)`.
pub fn stream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, &[]))
}
