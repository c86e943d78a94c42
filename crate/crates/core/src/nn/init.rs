//! Seeded parameter initialization.
//!
//! Each layer draws from its own ChaCha8 stream keyed by `(seed, layer name)`,
//! so parameters are a pure function of the seed, the name and the shape and
//! do not depend on construction order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Generator for the layer called `name` under the network seed `seed`.
pub fn layer_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(fnv1a(name))))
}

/// `count` draws from `uniform(-a, a)` with `a = sqrt(1 / fan_in)`.
pub fn uniform_fan_in(rng: &mut ChaCha8Rng, count: usize, fan_in: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Derives a child seed, e.g. one network seed per pipeline stage.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a(name))
}
