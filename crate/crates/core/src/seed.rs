//! Labeled seed derivation.
//!
//! A master seed fans out into independent streams keyed by a label path
//! (experiment, odor, trial, ...). Adding trials to one stream never perturbs
//! another, so earlier results stay reproducible when a run is extended.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a label and an index into `parent`, yielding a child seed.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(parent);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index.wrapping_add(0x5EED)))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn rng_for(parent: u64, label: &str, index: u64) -> SimRng {
    rng_from(derive(parent, label, index))
}
