use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};

/// Indexed triangle mesh.
///
/// Construction drops zero-area triangles; indices are validated and
/// coordinates must be finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid_input(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid_input(format!(
                "triangle {t:?} references a vertex out of range (have {n})"
            )));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                geom::norm2(geom::cross(geom::sub(b, a), geom::sub(c, a))) > 0.0
            })
            .collect();
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    /// Builds a mesh without the zero-area cleanup. Used for meshes produced
    /// by this crate where every triangle is already known to be valid.
    pub(crate) fn from_parts_unchecked(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * geom::norm(geom::cross(geom::sub(b, a), geom::sub(c, a)))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Bounding box of the vertices referenced by triangles.
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for t in &self.triangles {
            for &i in t {
                b.grow(self.vertices[i as usize]);
            }
        }
        b
    }

    /// V − E + F over the referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                used[a as usize] = true;
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - edges.len() as i64 + self.triangles.len() as i64
    }

    /// True iff every edge is shared by exactly two triangles that traverse
    /// it in opposite directions. An empty mesh is vacuously watertight.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn transformed(&self, f: impl Fn(Point3) -> Point3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Uniformly scales and translates the mesh so its bounding box is
    /// centered at the origin and its longest side spans `[-extent, +extent]`.
    pub fn normalized(&self, extent: f64) -> Result<TriangleMesh> {
        if self.triangles.is_empty() {
            return Err(Error::invalid_input("cannot normalize an empty mesh"));
        }
        if !(extent > 0.0) {
            return Err(Error::invalid_input(
                "normalization extent must be positive",
            ));
        }
        let b = self.bounds();
        let e = b.extent();
        let longest = e[0].max(e[1]).max(e[2]);
        if !(longest > 0.0) {
            return Err(Error::invalid_input("mesh has a degenerate bounding box"));
        }
        let center = b.center();
        let s = 2.0 * extent / longest;
        Ok(self.transformed(|v| geom::scale(geom::sub(v, center), s)))
    }

    /// Parses Wavefront OBJ `v` and `f` records. Polygons are fan-triangulated;
    /// texture/normal indices (`f 1/2/3`) and negative indices are accepted,
    /// all other records are ignored.
    pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::invalid_input(format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::invalid_input(format!(
                            "line {}: vertex needs three coordinates",
                            lineno + 1
                        )));
                    }
                    vertices.push([coords[0], coords[1], coords[2]]);
                }
                Some("f") => {
                    let mut poly = Vec::new();
                    for tok in parts {
                        let head = tok.split('/').next().unwrap_or("");
                        let idx: i64 = head.parse().map_err(|_| {
                            Error::invalid_input(format!(
                                "line {}: bad face index {tok:?}",
                                lineno + 1
                            ))
                        })?;
                        let resolved = if idx > 0 {
                            idx - 1
                        } else if idx < 0 {
                            vertices.len() as i64 + idx
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(Error::invalid_input(format!(
                                "line {}: face index {idx} out of range",
                                lineno + 1
                            )));
                        }
                        poly.push(resolved as u32);
                    }
                    if poly.len() < 3 {
                        return Err(Error::invalid_input(format!(
                            "line {}: face needs at least three vertices",
                            lineno + 1
                        )));
                    }
                    for w in 1..poly.len() - 1 {
                        triangles.push([poly[0], poly[w], poly[w + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    pub fn read_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
        let text = fs::read_to_string(path)?;
        Self::parse_obj(&text)
    }

    /// OBJ text with fixed-precision coordinates so identical meshes always
    /// serialize to identical bytes.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 24);
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.7} {:.7} {:.7}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_obj_string())?;
        Ok(())
    }
}
