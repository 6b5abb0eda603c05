//! Triangle meshes, dense volume grids and truncated signed distance
//! sampling.

mod bvh;
mod grid;
mod mesh;
mod sdf;
mod tsdf;

pub use bvh::{closest_on_triangle, Bvh, ClosestHit, Feature};
pub use grid::{VolumeGrid, VOL_HEADER_LEN};
pub use mesh::TriangleMesh;
pub use sdf::{inside_by_ray_parity, signed_distance, MeshSdf};
pub use tsdf::{sample_analytic_tsdf, sample_tsdf, TsdfConfig};

/// See [`TriangleMesh::normalized`].
pub fn normalize_mesh(mesh: &TriangleMesh, extent: f64) -> crate::Result<TriangleMesh> {
    mesh.normalized(extent)
}
