//! Bounding-volume hierarchy over mesh triangles for exact closest-point
//! queries.

use crate::geom::{self, Aabb, Point3};

use super::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

/// Closest mesh feature to a query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Corner index 0..3 of the triangle.
    Vertex(u8),
    /// Edge `e` joins corners `e` and `(e + 1) % 3`.
    Edge(u8),
    Face,
}

#[derive(Debug, Clone, Copy)]
pub struct ClosestHit {
    pub dist2: f64,
    pub triangle: usize,
    pub point: Point3,
    pub feature: Feature,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        end: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.triangles().len();
        let boxes: Vec<Aabb> = (0..n)
            .map(|t| {
                let mut b = Aabb::empty();
                for c in mesh.corners(t) {
                    b.grow(c);
                }
                b
            })
            .collect();
        let centroids: Vec<Point3> = boxes.iter().map(Aabb::center).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            order: (0..n).collect(),
        };
        if n > 0 {
            bvh.build_node(&boxes, &centroids, 0, n);
        }
        bvh
    }

    fn build_node(
        &mut self,
        boxes: &[Aabb],
        centroids: &[Point3],
        start: usize,
        end: usize,
    ) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &t in &self.order[start..end] {
            bounds = bounds.union(&boxes[t]);
            cbounds.grow(centroids[t]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let axis = cbounds.longest_axis();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf {
            bounds,
            start: 0,
            end: 0,
        });
        let left = self.build_node(boxes, centroids, start, mid);
        let right = self.build_node(boxes, centroids, mid, end);
        self.nodes[id] = Node::Inner {
            bounds,
            left,
            right,
        };
        id
    }

    /// Exact nearest triangle to `p`; `None` only for an empty mesh.
    pub fn closest(&self, mesh: &TriangleMesh, p: Point3) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds().dist2(p)));
        while let Some((id, lower)) = stack.pop() {
            if lower > best_d2 {
                continue;
            }
            match &self.nodes[id] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let [a, b, c] = mesh.corners(t);
                        let (q, feature) = closest_on_triangle(p, a, b, c);
                        let d2 = geom::dist2(p, q);
                        if d2 < best_d2 || (d2 == best_d2 && best.is_some_and(|h| t < h.triangle)) {
                            best_d2 = d2;
                            best = Some(ClosestHit {
                                dist2: d2,
                                triangle: t,
                                point: q,
                                feature,
                            });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().dist2(p);
                    let dr = self.nodes[*right].bounds().dist2(p);
                    // nearer child on top of the stack
                    if dl <= dr {
                        stack.push((*right, dr));
                        stack.push((*left, dl));
                    } else {
                        stack.push((*left, dl));
                        stack.push((*right, dr));
                    }
                }
            }
        }
        best
    }
}

/// Closest point on triangle `abc` to `p` together with the feature that
/// contains it (Voronoi-region classification).
pub fn closest_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> (Point3, Feature) {
    let ab = geom::sub(b, a);
    let ac = geom::sub(c, a);
    let ap = geom::sub(p, a);
    let d1 = geom::dot(ab, ap);
    let d2 = geom::dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Feature::Vertex(0));
    }
    let bp = geom::sub(p, b);
    let d3 = geom::dot(ab, bp);
    let d4 = geom::dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (geom::add(a, geom::scale(ab, v)), Feature::Edge(0));
    }
    let cp = geom::sub(p, c);
    let d5 = geom::dot(ab, cp);
    let d6 = geom::dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (geom::add(a, geom::scale(ac, w)), Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (
            geom::add(b, geom::scale(geom::sub(c, b), w)),
            Feature::Edge(1),
        );
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (
        geom::add(a, geom::add(geom::scale(ab, v), geom::scale(ac, w))),
        Feature::Face,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force_nearest() {
        let mesh = shapes::icosphere(0.4, 2);
        let bvh = Bvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let hit = bvh.closest(&mesh, p).unwrap();
            let brute = (0..mesh.triangles().len())
                .map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    geom::dist2(p, closest_on_triangle(p, a, b, c).0)
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(hit.dist2, brute);
        }
    }

    #[test]
    fn classifies_features() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(
            closest_on_triangle([-1.0, -1.0, 0.0], a, b, c).1,
            Feature::Vertex(0)
        );
        assert_eq!(
            closest_on_triangle([0.5, -1.0, 0.0], a, b, c).1,
            Feature::Edge(0)
        );
        assert_eq!(
            closest_on_triangle([1.0, 1.0, 0.0], a, b, c).1,
            Feature::Edge(1)
        );
        assert_eq!(
            closest_on_triangle([-1.0, 0.5, 0.0], a, b, c).1,
            Feature::Edge(2)
        );
        let (q, f) = closest_on_triangle([0.2, 0.2, 3.0], a, b, c);
        assert_eq!(f, Feature::Face);
        assert!((q[0] - 0.2).abs() < 1e-15 && (q[1] - 0.2).abs() < 1e-15 && q[2] == 0.0);
    }
}
