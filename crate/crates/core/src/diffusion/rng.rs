//! Seeded random streams.
//!
//! Every random draw comes from a ChaCha8 generator keyed by a 64-bit seed
//! and a 64-bit stream id. ChaCha is counter-based, so each `(seed, stream)`
//! pair is an independent sequence and any single draw can be reproduced in
//! isolation.
//!
//! Stream ids used by the sampler: `(chain << 32) | step`, where step 0 is
//! the initial `C_T` draw and step `t` the noise injected at step `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::volume::VolumeGrid;

/// Stream reserved for deriving child seeds.
const SPLIT_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn chain_step_stream(chain: u64, step: u64) -> u64 {
    (chain << 32) | (step & 0xffff_ffff)
}

/// Seed for the `index`-th child of `seed` (e.g. the `index`-th generated
/// shape): `seed ^ index` pushed through the split stream.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    stream(seed ^ index, SPLIT_STREAM).random()
}

pub fn standard_normal_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn standard_normal_volume(rng: &mut impl Rng, resolution: usize, extent: f64) -> VolumeGrid {
    let values = standard_normal_vec(rng, resolution * resolution * resolution);
    VolumeGrid::new(resolution, extent, values).expect("normal samples are finite")
}
