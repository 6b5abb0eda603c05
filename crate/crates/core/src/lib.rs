//! Wavelet-domain diffusion for 3D shape generation.
//!
//! Shapes are sampled as truncated signed distance volumes
//! ([`volume`]), compressed into a coarse/detail coefficient pair
//! ([`wavelet`]), modelled with a denoising diffusion process over the coarse
//! volume ([`diffusion`], [`nn`]) and turned back into meshes
//! ([`isosurface`]). [`metrics`] scores generated shape sets and
//! [`pipeline`] wires the stages together.

pub mod diffusion;
pub mod error;
pub mod geom;
pub mod isosurface;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod shapes;
pub mod volume;
pub mod wavelet;

pub use error::{Error, Result};
