//! Deterministic random streams keyed by task coordinates.
//!
//! Every replication, chain, or cell of an experiment derives its own seed from
//! the master seed and a list of integer coordinates. Results therefore never
//! depend on execution order or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with coordinates into a child seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Stable 64-bit code for a short string label (FNV-1a).
pub fn label_code(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(master: u64, coords: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, coords))
}
