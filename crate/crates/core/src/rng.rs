//! Seeded, splittable random streams.
//!
//! Every run is driven by a `u64` seed. Independent sub-streams come from
//! [`derive_seed`] (a splitmix64 mix of a base seed and indices) and from the
//! ChaCha stream id, so replications can run in any order or in parallel and
//! still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream used for data generation.
pub const STREAM_DATA: u64 = 0;
/// Stream used for the sample split.
pub const STREAM_SPLIT: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a base seed and a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |h, &k| splitmix64(h ^ splitmix64(k)))
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
