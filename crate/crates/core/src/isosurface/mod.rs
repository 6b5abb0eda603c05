//! Iso-surface extraction by marching cubes.

mod marching;
mod tables;

pub use marching::{marching_cubes, mesh_is_watertight};
pub use tables::{tables, MarchingCubesTables, CORNER_OFFSETS, EDGES};
