//! Seed handling.
//!
//! Every stochastic stage owns a [`ChaCha8Rng`] built from a 64-bit seed. Child
//! seeds are derived from a parent seed and a stream tag with SplitMix64, so a
//! single master seed fans out into independent, reproducible streams:
//!
//! ```text
//! child = splitmix64(splitmix64(parent ^ 0x9E37_79B9_7F4A_7C15) ^ tag)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed for stream `tag`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent ^ 0x9E37_79B9_7F4A_7C15) ^ tag)
}

/// Stream tags used by the experiment harness.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const NOISE_GAN: u64 = 2;
    pub const NOISE_MODEL_M: u64 = 3;
    pub const WGAN: u64 = 4;
    pub const MODEL_M: u64 = 5;
    pub const SIMPLE_NN: u64 = 6;
    pub const IMBALANCE: u64 = 7;

    /// Per-trial seed: the trial index is mixed in as its own stream.
    pub const TRIAL_BASE: u64 = 1 << 32;
}
