//! Biorthogonal wavelet filter banks, separable 3D coarse transforms and the
//! Laplacian-pyramid coefficient pair.

mod filters;
mod pyramid;
mod transform;

pub use filters::{Filter, FilterBank, FILTER_NAMES};
pub use pyramid::{
    compact_pair, decompose, reconstruct_from_pair, reconstruct_full, retained_fraction,
    PyramidLevels, WaveletPair,
};
pub use transform::{analyze_1d, dwt3_coarse, idwt3_coarse, reflect, synthesize_1d};
