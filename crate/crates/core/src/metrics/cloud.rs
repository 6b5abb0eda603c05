use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;

use crate::diffusion::rng::stream;
use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::volume::TriangleMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<PointCloud> {
        if points.is_empty() {
            return Err(Error::invalid_input("point cloud is empty"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid_input(
                "point cloud has non-finite coordinates",
            ));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, f: impl Fn(Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    /// At most `n` points chosen without replacement, in their original
    /// order; the cloud itself when it is already small enough.
    pub fn subsample(&self, n: usize, seed: u64) -> PointCloud {
        if self.points.len() <= n {
            return self.clone();
        }
        let mut rng = stream(seed, 0);
        let mut idx = sample(&mut rng, self.points.len(), n).into_vec();
        idx.sort_unstable();
        PointCloud {
            points: idx.into_iter().map(|i| self.points[i]).collect(),
        }
    }
}

/// `n` points distributed uniformly over the surface: triangles are picked
/// with probability proportional to area, then a uniform barycentric point
/// is drawn inside.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid_input("cannot sample zero points"));
    }
    let areas: Vec<f64> = (0..mesh.triangles().len())
        .map(|t| mesh.triangle_area(t))
        .collect();
    if !(areas.iter().sum::<f64>() > 0.0) {
        return Err(Error::invalid_input("mesh has no surface area to sample"));
    }
    let pick = WeightedIndex::new(&areas)
        .map_err(|e| Error::invalid_input(format!("bad triangle areas: {e}")))?;
    let mut rng = stream(seed, 0);
    let points = (0..n)
        .map(|_| {
            let [a, b, c] = mesh.corners(pick.sample(&mut rng));
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            geom::add(
                geom::add(geom::scale(a, wa), geom::scale(b, wb)),
                geom::scale(c, wc),
            )
        })
        .collect();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_in_the_triangle() {
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pc = sample_surface(&m, 1000, 4).unwrap();
        for p in pc.points() {
            assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0 + 1e-12 && p[2] == 0.0);
        }
        assert_eq!(pc, sample_surface(&m, 1000, 4).unwrap());
    }

    #[test]
    fn area_proportional_allocation() {
        // areas 1 and 3 (right triangles with legs √2 and √6)
        let (a, b) = (2f64.sqrt(), 6f64.sqrt());
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [a, 0.0, 0.0],
                [0.0, a, 0.0],
                [0.0, 0.0, 5.0],
                [b, 0.0, 5.0],
                [0.0, b, 5.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let n = 4000;
        let pc = sample_surface(&m, n, 9).unwrap();
        let upper = pc.points().iter().filter(|p| p[2] > 1.0).count() as f64;
        let sd = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((upper - 0.75 * n as f64).abs() < 3.0 * sd);
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        assert!(sample_surface(&TriangleMesh::default(), 10, 0).is_err());
    }
}
