use std::collections::HashMap;

use crate::geom::{self, Point3};

use super::bvh::{Bvh, Feature};
use super::mesh::TriangleMesh;

/// Signed distance queries against a triangle mesh.
///
/// The magnitude is the exact Euclidean distance to the nearest triangle.
/// The sign comes from the angle-weighted pseudonormal of the closest
/// feature (face, edge or vertex): negative inside, positive outside. For
/// meshes that are not watertight the sign may be wrong near open
/// boundaries.
#[derive(Debug, Clone)]
pub struct MeshSdf<'a> {
    mesh: &'a TriangleMesh,
    bvh: Bvh,
    face_normals: Vec<Point3>,
    edge_normals: HashMap<(u32, u32), Point3>,
    vertex_normals: Vec<Point3>,
}

impl<'a> MeshSdf<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let tris = mesh.triangles();
        let mut face_normals = Vec::with_capacity(tris.len());
        let mut edge_normals: HashMap<(u32, u32), Point3> =
            HashMap::with_capacity(tris.len() * 3 / 2);
        let mut vertex_normals = vec![[0.0; 3]; mesh.vertices().len()];
        for (t, tri) in tris.iter().enumerate() {
            let c = mesh.corners(t);
            let n = geom::normalized(geom::cross(geom::sub(c[1], c[0]), geom::sub(c[2], c[0])));
            face_normals.push(n);
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let e = edge_normals.entry((a.min(b), a.max(b))).or_insert([0.0; 3]);
                *e = geom::add(*e, n);

                let u = geom::normalized(geom::sub(c[(k + 1) % 3], c[k]));
                let v = geom::normalized(geom::sub(c[(k + 2) % 3], c[k]));
                let angle = geom::dot(u, v).clamp(-1.0, 1.0).acos();
                let vn = &mut vertex_normals[tri[k] as usize];
                *vn = geom::add(*vn, geom::scale(n, angle));
            }
        }
        MeshSdf {
            mesh,
            bvh: Bvh::build(mesh),
            face_normals,
            edge_normals,
            vertex_normals,
        }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    /// Signed distance from `p` to the mesh surface. Returns `+inf` for an
    /// empty mesh.
    pub fn signed_distance(&self, p: Point3) -> f64 {
        let Some(hit) = self.bvh.closest(self.mesh, p) else {
            return f64::INFINITY;
        };
        if hit.dist2 == 0.0 {
            return 0.0;
        }
        let tri = self.mesh.triangles()[hit.triangle];
        let normal = match hit.feature {
            Feature::Face => self.face_normals[hit.triangle],
            Feature::Edge(e) => {
                let (a, b) = (tri[e as usize], tri[(e as usize + 1) % 3]);
                self.edge_normals[&(a.min(b), a.max(b))]
            }
            Feature::Vertex(v) => self.vertex_normals[tri[v as usize] as usize],
        };
        let d = hit.dist2.sqrt();
        if geom::dot(geom::sub(p, hit.point), normal) < 0.0 {
            -d
        } else {
            d
        }
    }

    /// Inside test by counting ray crossings. Independent of the
    /// pseudonormal sign; intended for validation on watertight meshes.
    pub fn inside_by_ray_parity(&self, p: Point3) -> bool {
        inside_by_ray_parity(self.mesh, p)
    }
}

/// Convenience one-off query. Builds the acceleration structure on every
/// call; use [`MeshSdf`] for repeated queries.
pub fn signed_distance(mesh: &TriangleMesh, p: Point3) -> f64 {
    MeshSdf::new(mesh).signed_distance(p)
}

// Ray direction with no rational relation to the coordinate axes, so that
// rays through grid-aligned probes do not graze mesh edges.
const RAY_DIR: Point3 = [
    0.577_215_664_901_532_9,
    0.754_877_666_246_692_8,
    0.311_107_929_736_964_8,
];

pub fn inside_by_ray_parity(mesh: &TriangleMesh, p: Point3) -> bool {
    let mut crossings = 0usize;
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.corners(t);
        if ray_hits_triangle(p, RAY_DIR, a, b, c) {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

// Möller–Trumbore, counting only hits strictly in front of the origin.
fn ray_hits_triangle(o: Point3, d: Point3, a: Point3, b: Point3, c: Point3) -> bool {
    let e1 = geom::sub(b, a);
    let e2 = geom::sub(c, a);
    let h = geom::cross(d, e2);
    let det = geom::dot(e1, h);
    if det.abs() < 1e-14 {
        return false;
    }
    let inv = 1.0 / det;
    let s = geom::sub(o, a);
    let u = inv * geom::dot(s, h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = geom::cross(s, e1);
    let v = inv * geom::dot(d, q);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    inv * geom::dot(e2, q) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_center_is_about_minus_one() {
        let sphere = shapes::icosphere(1.0, 4);
        let d = signed_distance(&sphere, [0.0; 3]);
        assert!((d + 1.0).abs() < 1e-2, "{d}");
    }

    #[test]
    fn vertex_query_is_exactly_zero() {
        let sphere = shapes::icosphere(1.0, 2);
        let sdf = MeshSdf::new(&sphere);
        for v in sphere.vertices().iter().take(20) {
            assert_eq!(sdf.signed_distance(*v), 0.0);
        }
    }

    #[test]
    fn box_exterior_distance_matches_brute_force() {
        let cube = shapes::box_mesh([-1.0; 3], [1.0; 3]);
        assert_eq!(signed_distance(&cube, [2.0, 0.0, 0.0]), 1.0);
        // edge and corner regions
        let d = signed_distance(&cube, [2.0, 2.0, 0.0]);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let d = signed_distance(&cube, [2.0, 2.0, 2.0]);
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(signed_distance(&cube, [0.5, 0.0, 0.0]), -0.5);
    }

    #[test]
    fn pseudonormal_sign_agrees_with_ray_parity() {
        let sphere = shapes::icosphere(0.35, 3);
        let sdf = MeshSdf::new(&sphere);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut agree = 0;
        let trials = 2000;
        for _ in 0..trials {
            let p = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
            let inside = sdf.signed_distance(p) < 0.0;
            if inside == sdf.inside_by_ray_parity(p) {
                agree += 1;
            }
        }
        assert!(agree as f64 / trials as f64 >= 0.999, "{agree}/{trials}");
    }
}
