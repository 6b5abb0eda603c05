//! Procedural test shapes: primitive meshes, analytic signed distance
//! functions and a parametric chair family used for demos and tests.

use std::collections::HashMap;

use rand::Rng;

use crate::geom::{self, Point3};
use crate::isosurface::marching_cubes;
use crate::volume::{TriangleMesh, VolumeGrid};

/// Axis-aligned box with outward-facing triangles.
pub fn box_mesh(min: Point3, max: Point3) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(8);
    for c in 0..8 {
        vertices.push([
            if c & 1 == 0 { min[0] } else { max[0] },
            if c & 2 == 0 { min[1] } else { max[1] },
            if c & 4 == 0 { min[2] } else { max[2] },
        ]);
    }
    // counter-clockwise seen from outside
    let quads = [
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriangleMesh::new(vertices, triangles).expect("box mesh is valid")
}

/// Geodesic sphere from a subdivided icosahedron; vertices lie exactly on
/// the sphere of the given radius.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| geom::normalized(v))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Point3>| -> u32 {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = geom::normalized(geom::scale(
                    geom::add(vertices[a as usize], vertices[b as usize]),
                    0.5,
                ));
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices
        .into_iter()
        .map(|v| geom::scale(v, radius))
        .collect();
    TriangleMesh::new(vertices, faces).expect("icosphere is valid")
}

pub fn sphere_sdf(center: Point3, radius: f64) -> impl Fn(Point3) -> f64 + Sync + Clone {
    move |p| geom::dist2(p, center).sqrt() - radius
}

/// Exact signed distance to an axis-aligned box.
pub fn box_sdf(p: Point3, center: Point3, half: Point3) -> f64 {
    let q = [
        (p[0] - center[0]).abs() - half[0],
        (p[1] - center[1]).abs() - half[1],
        (p[2] - center[2]).abs() - half[2],
    ];
    let outside = geom::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    outside + inside
}

/// Parameters of the procedural chair family: a seat slab, a backrest and
/// four legs, in a frame where y is up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChairParams {
    pub seat_width: f64,
    pub seat_depth: f64,
    pub seat_height: f64,
    pub seat_thickness: f64,
    pub back_height: f64,
    pub back_thickness: f64,
    pub leg_thickness: f64,
}

impl Default for ChairParams {
    fn default() -> Self {
        ChairParams {
            seat_width: 0.5,
            seat_depth: 0.5,
            seat_height: 0.45,
            seat_thickness: 0.07,
            back_height: 0.5,
            back_thickness: 0.07,
            leg_thickness: 0.07,
        }
    }
}

impl ChairParams {
    pub fn random(rng: &mut impl Rng) -> Self {
        ChairParams {
            seat_width: rng.random_range(0.4..0.6),
            seat_depth: rng.random_range(0.4..0.6),
            seat_height: rng.random_range(0.35..0.55),
            seat_thickness: rng.random_range(0.06..0.1),
            back_height: rng.random_range(0.3..0.6),
            back_thickness: rng.random_range(0.06..0.1),
            leg_thickness: rng.random_range(0.06..0.1),
        }
    }

    /// Signed distance of the chair, centered on its bounding box.
    pub fn sdf(&self, p: Point3) -> f64 {
        let total_h = self.seat_height + self.back_height;
        let y0 = -total_h / 2.0;
        let (w, d) = (self.seat_width / 2.0, self.seat_depth / 2.0);
        let seat_y = y0 + self.seat_height - self.seat_thickness / 2.0;
        let mut dist = box_sdf(p, [0.0, seat_y, 0.0], [w, self.seat_thickness / 2.0, d]);
        let back_z = -d + self.back_thickness / 2.0;
        let back_y = y0 + self.seat_height + self.back_height / 2.0;
        dist = dist.min(box_sdf(
            p,
            [0.0, back_y, back_z],
            [w, self.back_height / 2.0, self.back_thickness / 2.0],
        ));
        let leg_h = (self.seat_height - self.seat_thickness) / 2.0;
        let lt = self.leg_thickness / 2.0;
        for sx in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                dist = dist.min(box_sdf(
                    p,
                    [sx * (w - lt), y0 + leg_h, sz * (d - lt)],
                    [lt, leg_h, lt],
                ));
            }
        }
        dist
    }

    /// Exact signed distance of the chair after uniform scaling so its
    /// longest bounding-box side spans `[-extent, +extent]`, the same frame
    /// as [`crate::volume::normalize_mesh`].
    pub fn fitted_sdf(&self, extent: f64) -> impl Fn(Point3) -> f64 + Sync + Clone {
        let longest = (self.seat_height + self.back_height)
            .max(self.seat_width)
            .max(self.seat_depth);
        let s = 2.0 * extent / longest;
        let chair = *self;
        move |p: Point3| s * chair.sdf(geom::scale(p, 1.0 / s))
    }

    /// Watertight chair mesh extracted from the analytic field on a
    /// `resolution³` grid spanning `[-0.5, 0.5]³`.
    pub fn mesh(&self, resolution: usize) -> TriangleMesh {
        let probe = VolumeGrid::zeros(resolution, 0.5);
        let field =
            VolumeGrid::from_fn(resolution, 0.5, |i, j, k| self.sdf(probe.location(i, j, k)));
        marching_cubes(&field, 0.0)
    }
}
