use std::collections::HashMap;

use crate::geom::Point3;
use crate::volume::{TriangleMesh, VolumeGrid};

use super::tables::{tables, CORNER_OFFSETS, EDGES};

/// Relative size of the nudge applied to samples that sit exactly on the
/// iso-level.
const ZERO_NUDGE: f64 = 1e-9;

/// Extracts the `iso` level set of `volume` as a triangle mesh.
///
/// Cells span neighbouring cell-centered samples. Vertices are placed by
/// linear interpolation on sign-changing edges and welded by edge identity;
/// a few ambiguous cells add a vertex at the centroid of a contour loop,
/// so the output is watertight whenever no sample equals `iso` exactly.
/// Triangle normals point toward values above `iso`. Samples exactly at
/// `iso` are treated as lying `1e-9 · τ` above it (τ = the TSDF truncation,
/// or the largest magnitude for non-TSDF volumes). Vertices are numbered in
/// first-use order over cells visited with z fastest, which makes the output
/// reproducible.
pub fn marching_cubes(volume: &VolumeGrid, iso: f64) -> TriangleMesh {
    let n = volume.resolution();
    if n < 2 {
        return TriangleMesh::default();
    }
    let scale = if volume.is_tsdf() {
        volume.truncation()
    } else {
        volume
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - iso).abs()))
    };
    let nudge = ZERO_NUDGE * if scale > 0.0 { scale } else { 1.0 };
    let shifted: Vec<f64> = volume
        .values()
        .iter()
        .map(|&v| {
            let s = v - iso;
            if s == 0.0 {
                nudge
            } else {
                s
            }
        })
        .collect();

    let tbl = tables();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut welded: HashMap<(usize, usize), u32> = HashMap::new();
    let index = |i: usize, j: usize, k: usize| (i * n + j) * n + k;

    for i in 0..n - 1 {
        for j in 0..n - 1 {
            for k in 0..n - 1 {
                let mut corner_idx = [0usize; 8];
                let mut case = 0usize;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    let id = index(i + off[0], j + off[1], k + off[2]);
                    corner_idx[c] = id;
                    if shifted[id] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if tbl.edge_mask[case] == 0 {
                    continue;
                }
                let mut edge_vertex = |e: usize| {
                    let (a, b, axis) = EDGES[e];
                    *welded.entry((corner_idx[a], axis)).or_insert_with(|| {
                        let (va, vb) = (shifted[corner_idx[a]], shifted[corner_idx[b]]);
                        let t = va / (va - vb);
                        let oa = CORNER_OFFSETS[a];
                        let mut p = [
                            volume.coord(i + oa[0]),
                            volume.coord(j + oa[1]),
                            volume.coord(k + oa[2]),
                        ];
                        p[axis] += t * volume.voxel_size();
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    })
                };
                let cell_tris = &tbl.triangles[case];
                let mut resolved: Vec<[u32; 3]> = Vec::with_capacity(cell_tris.len());
                let mut centers: Vec<(u8, Vec<u32>)> = Vec::new();
                for tri in cell_tris {
                    let mut out = [u32::MAX; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        if (e as usize) < EDGES.len() {
                            out[slot] = edge_vertex(e as usize);
                        }
                    }
                    if let Some(c) = tri.iter().copied().find(|&e| e as usize >= EDGES.len()) {
                        let ring = match centers.iter_mut().find(|(code, _)| *code == c) {
                            Some((_, ring)) => ring,
                            None => {
                                centers.push((c, Vec::new()));
                                &mut centers.last_mut().unwrap().1
                            }
                        };
                        ring.extend(out.iter().filter(|&&v| v != u32::MAX));
                    }
                    resolved.push(out);
                }
                let mut center_ids = Vec::with_capacity(centers.len());
                for (code, mut ring) in centers {
                    ring.sort_unstable();
                    ring.dedup();
                    let mut p = [0.0; 3];
                    for &v in &ring {
                        for (acc, x) in p.iter_mut().zip(vertices[v as usize]) {
                            *acc += x / ring.len() as f64;
                        }
                    }
                    vertices.push(p);
                    center_ids.push((code, (vertices.len() - 1) as u32));
                }
                for (tri, mut out) in cell_tris.iter().zip(resolved) {
                    for (slot, &e) in tri.iter().enumerate() {
                        if out[slot] == u32::MAX {
                            out[slot] = center_ids.iter().find(|(c, _)| *c == e).unwrap().1;
                        }
                    }
                    triangles.push(out);
                }
            }
        }
    }
    TriangleMesh::from_parts_unchecked(vertices, triangles)
}

/// True iff every edge is shared by exactly two oppositely oriented
/// triangles; vacuously true for an empty mesh.
pub fn mesh_is_watertight(mesh: &TriangleMesh) -> bool {
    mesh.is_watertight()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    fn sphere_volume(n: usize, radius: f64) -> VolumeGrid {
        let probe = VolumeGrid::zeros(n, 0.45);
        let vals = VolumeGrid::from_fn(n, 0.45, |i, j, k| {
            (geom::norm(probe.location(i, j, k)) - radius).clamp(-0.1, 0.1)
        });
        vals.relabel(0.45, 0.1).unwrap()
    }

    #[test]
    fn constant_volume_gives_empty_mesh() {
        let v = VolumeGrid::filled(8, 1.0, 0.3);
        assert!(marching_cubes(&v, 0.0).is_empty());
    }

    #[test]
    fn single_inside_voxel_is_a_closed_octahedron() {
        let v = VolumeGrid::from_fn(
            5,
            1.0,
            |i, j, k| if (i, j, k) == (2, 2, 2) { -1.0 } else { 1.0 },
        );
        let m = marching_cubes(&v, 0.0);
        assert_eq!(m.triangles().len(), 8);
        assert_eq!(m.vertices().len(), 6);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn normals_point_outward() {
        let v = sphere_volume(24, 0.25);
        let m = marching_cubes(&v, 0.0);
        for t in 0..m.triangles().len() {
            let [a, b, c] = m.corners(t);
            let nrm = geom::cross(geom::sub(b, a), geom::sub(c, a));
            let centroid = geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0);
            assert!(geom::dot(nrm, centroid) > 0.0);
        }
    }

    #[test]
    fn sign_flip_reverses_orientation() {
        let v = sphere_volume(16, 0.2);
        let neg = v.map(|x| -x);
        let a = marching_cubes(&v, 0.0);
        let b = marching_cubes(&neg, 0.0);
        assert_eq!(oriented_triangles(&a.flipped()), oriented_triangles(&b));
    }

    /// Triangles as coordinate triples, rotated to start at the smallest
    /// corner, sorted; independent of vertex numbering.
    fn oriented_triangles(m: &TriangleMesh) -> Vec<[[u64; 3]; 3]> {
        let mut out: Vec<[[u64; 3]; 3]> = (0..m.triangles().len())
            .map(|t| {
                let c = m.corners(t).map(|p| p.map(f64::to_bits));
                let s = (0..3).min_by_key(|&i| c[i]).unwrap();
                [c[s], c[(s + 1) % 3], c[(s + 2) % 3]]
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn iso_level_shift_matches_offset_volume() {
        let v = sphere_volume(16, 0.2);
        let a = marching_cubes(&v, 0.03);
        let b = marching_cubes(&v.map(|x| x - 0.03), 0.0);
        assert_eq!(a.triangles(), b.triangles());
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-12);
            }
        }
    }
}
