//! Marching cubes case tables.
//!
//! Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
//! Edge `axis * 4 + m` runs along `axis` from the m-th corner (in ascending
//! order) whose `axis` bit is clear. A case index has bit `c` set when
//! corner `c` is inside (negative).
//!
//! The triangle table is built by tracing the iso-contour across the six
//! cell faces and fan-triangulating each closed loop. On an ambiguous face
//! (diagonal corners sharing a sign) the two corners on the diagonal through
//! the face's lowest corner are treated as connected, whatever their sign.
//! Neighbouring cells see the same face with the same lowest corner, so the
//! contour segments agree across faces and the surface is closed; negating
//! the field keeps every segment and only reverses its direction.

use std::sync::OnceLock;

pub const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// `(corner_a, corner_b, axis)` for each of the 12 edges; `corner_a` is the
/// lower end.
pub const EDGES: [(usize, usize, usize); 12] = build_edges();

const fn build_edges() -> [(usize, usize, usize); 12] {
    let mut out = [(0, 0, 0); 12];
    let mut axis = 0;
    while axis < 3 {
        let bit = 1 << axis;
        let mut m = 0;
        let mut c = 0;
        while c < 8 {
            if c & bit == 0 {
                out[axis * 4 + m] = (c, c | bit, axis);
                m += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    out
}

#[derive(Debug)]
pub struct MarchingCubesTables {
    /// Bit `e` set when edge `e` crosses the iso-surface.
    pub edge_mask: [u16; 256],
    /// Triangles as edge-index triples, wound so normals point toward the
    /// positive (outside) region. A code `12 + l` stands for a vertex inside
    /// the cell at the centroid of the crossings on the `l`-th contour loop.
    pub triangles: Vec<Vec<[u8; 3]>>,
}

pub fn tables() -> &'static MarchingCubesTables {
    static TABLES: OnceLock<MarchingCubesTables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    EDGES
        .iter()
        .position(|&(ea, eb, _)| ea == lo && eb == hi)
        .expect("corners share an edge")
}

/// The six faces as corner cycles, counter-clockwise seen from outside,
/// starting at the face's lowest corner.
fn faces() -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let corner = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            out[axis * 2 + side] = if side == 1 {
                [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
            } else {
                [corner(0, 0), corner(0, 1), corner(1, 1), corner(1, 0)]
            };
        }
    }
    out
}

fn build_tables() -> MarchingCubesTables {
    let faces = faces();
    let mut edge_mask = [0u16; 256];
    let mut triangles = Vec::with_capacity(256);
    for case in 0..256usize {
        let inside = |c: usize| case & (1 << c) != 0;
        for (e, &(a, b, _)) in EDGES.iter().enumerate() {
            if inside(a) != inside(b) {
                edge_mask[case] |= 1 << e;
            }
        }

        // next[e] = edge reached by following the contour out of edge e
        let mut next = [usize::MAX; 12];
        for face in &faces {
            let edge = |i: usize| edge_between(face[i], face[(i + 1) % 4]);
            // crossings along the counter-clockwise walk: inside->outside
            // starts a segment, outside->inside ends one
            let mut starts = Vec::new();
            let mut ends = Vec::new();
            for i in 0..4 {
                let (p, q) = (inside(face[i]), inside(face[(i + 1) % 4]));
                if p && !q {
                    starts.push(i);
                } else if !p && q {
                    ends.push(i);
                }
            }
            match starts.len() {
                0 => {}
                1 => next[edge(starts[0])] = edge(ends[0]),
                _ => {
                    // ambiguous face; keep the diagonal through face[0] joined
                    if inside(face[0]) {
                        // walk: 0 in, 1 out, 2 in, 3 out; cut off corners 1 and 3
                        next[edge(0)] = edge(1);
                        next[edge(2)] = edge(3);
                    } else {
                        // cut off the inside corners 1 and 3
                        next[edge(1)] = edge(0);
                        next[edge(3)] = edge(2);
                    }
                }
            }
        }

        let mut tris = Vec::new();
        let mut visited = [false; 12];
        let mut loops = 0u8;
        for start in 0..12 {
            if edge_mask[case] & (1 << start) == 0 || visited[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut e = start;
            while !visited[e] {
                visited[e] = true;
                cycle.push(e as u8);
                e = next[e];
                debug_assert!(e != usize::MAX, "open contour in case {case}");
            }
            debug_assert_eq!(e, start);
            // contour loops wind with the inside on the normal side; flip
            // each triangle so normals face outward
            let center = 12 + loops;
            loops += 1;
            for [a, b, c] in triangulate(&cycle, center, &faces) {
                tris.push([a, c, b]);
            }
        }
        triangles.push(tris);
    }
    MarchingCubesTables {
        edge_mask,
        triangles,
    }
}

fn share_face(a: u8, b: u8, faces: &[[usize; 4]; 6]) -> bool {
    let (ea, eb) = (EDGES[a as usize], EDGES[b as usize]);
    faces
        .iter()
        .any(|f| [ea.0, ea.1, eb.0, eb.1].iter().all(|c| f.contains(c)))
}

/// Triangulates the contour loop `cycle` (code `center` names an extra
/// vertex inside the cell). No diagonal joins two edges on the same cell
/// face, because such a diagonal lies in the face and the neighbouring cell
/// could emit it too. When no such triangulation exists the loop is fanned
/// around `center`. The loop is triangulated in a direction-independent
/// canonical form so that complementary cases give mirrored triangles.
fn triangulate(cycle: &[u8], center: u8, faces: &[[usize; 4]; 6]) -> Vec<[u8; 3]> {
    let mut rev = cycle.to_vec();
    rev[1..].reverse();
    let reversed = rev < cycle.to_vec();
    let poly = if reversed { rev } else { cycle.to_vec() };
    let n = poly.len();
    let ok = |i: usize, j: usize| {
        j == i + 1 || (i == 0 && j == n - 1) || !share_face(poly[i], poly[j], faces)
    };
    // split[i][j] = apex k of a valid triangulation of the sub-polygon i..=j
    let mut split = vec![vec![None; n]; n];
    for len in 2..n {
        for i in 0..n - len {
            let j = i + len;
            if ok(i, j) {
                split[i][j] = (i + 1..j).find(|&k| {
                    (k == i + 1 || split[i][k].is_some()) && (k + 1 == j || split[k][j].is_some())
                });
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    if split[0][n - 1].is_some() {
        let mut stack = vec![(0, n - 1)];
        while let Some((i, j)) = stack.pop() {
            if let Some(k) = split[i][j] {
                out.push([poly[i], poly[k], poly[j]]);
                stack.push((i, k));
                stack.push((k, j));
            }
        }
    } else {
        for i in 0..n {
            out.push([center, poly[i], poly[(i + 1) % n]]);
        }
    }
    if reversed {
        for t in &mut out {
            t.swap(1, 2);
        }
    }
    out
}
