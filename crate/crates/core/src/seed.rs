//! Seed derivation.
//!
//! Every random stream in a run is derived from one base seed by hashing the
//! name of the component that consumes it together with an index:
//!
//! ```text
//! stream_seed = splitmix64(fnv1a64(component) ^ splitmix64(base ^ splitmix64(index)))
//! ```
//!
//! Components used by the crate: `"env"` (index = env worker), `"policy_init"`,
//! `"actions"`, `"shuffle"`, `"eval_episode"` and `"eval_actions"` (index =
//! episode number), `"baseline_actions"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout. ChaCha8 output is stable across platforms and
/// crate versions, which keeps logged runs reproducible.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, component: &str, index: u64) -> u64 {
    splitmix64(fnv1a64(component.as_bytes()) ^ splitmix64(base ^ splitmix64(index)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derive_rng(base: u64, component: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(base, component, index))
}
