//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by
//! `(experiment seed, purpose)` and positioned by an index (usually the
//! contract id), so any contract can be generated independently of every
//! other one and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the key, so
/// streams for different purposes never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Covariates = 1,
    Split = 2,
    OutcomeWeights = 3,
    BiasWeights = 4,
    OutcomeNoise = 5,
    Treatment = 6,
    Training = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed; used to give independent training runs their own
/// seeds from a single experiment seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = derive_seed(seed, purpose as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
