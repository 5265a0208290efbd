//! Named RNG streams.
//!
//! Every random draw in a run comes from a [`ChaCha8Rng`] whose seed is
//! derived from the master seed, a stream label and up to two indices:
//!
//! ```text
//! seed = mix(mix(mix(master ^ fnv1a64(label)) ^ a) ^ b)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Streams used by the crate:
//! `"env"` (synthetic tables), `"init"` (parameter init), `"train"`
//! (round, trajectory), `"eval"` (epoch, trajectory), `"bandit"` (epoch),
//! `"elbo"` (epoch, trajectory), `"oracle"` (epoch).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `label` at indices `(a, b)`.
pub fn derive_seed(master: u64, label: &str, a: u64, b: u64) -> u64 {
    let s = splitmix64(master ^ fnv1a64(label.as_bytes()));
    let s = splitmix64(s ^ a);
    splitmix64(s ^ b)
}

pub fn stream(master: u64, label: &str, a: u64, b: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, label, a, b))
}
