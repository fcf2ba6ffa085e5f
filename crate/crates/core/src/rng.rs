//! Seeding. Every stochastic stage draws from a ChaCha8 stream whose seed is
//! derived from the run's master seed and a stage label, so stages can be
//! rerun independently and still reproduce.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for a named stage under `master`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a(stage.as_bytes())))
}

/// Seed for item `index` of a stage (per-window, per-trial).
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(master: u64, stage: &str) -> Rng {
    rng_from(derive_seed(master, stage))
}
