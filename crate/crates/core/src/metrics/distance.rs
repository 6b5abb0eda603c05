use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;

use super::cloud::PointCloud;

/// Largest cloud size [`emd`] solves exactly.
pub const EMD_MAX_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "CD")]
    Chamfer,
    #[serde(rename = "EMD")]
    EarthMovers,
}

impl DistanceKind {
    pub fn label(self) -> &'static str {
        match self {
            DistanceKind::Chamfer => "CD",
            DistanceKind::EarthMovers => "EMD",
        }
    }

    /// Reporting unit of the distance (CD in 10⁻³, EMD in 10⁻²).
    pub fn unit_scale(self) -> f64 {
        match self {
            DistanceKind::Chamfer => 1e-3,
            DistanceKind::EarthMovers => 1e-2,
        }
    }

    pub fn eval(self, a: &PointCloud, b: &PointCloud) -> Result<f64> {
        match self {
            DistanceKind::Chamfer => Ok(chamfer(a, b)),
            DistanceKind::EarthMovers => emd(a, b),
        }
    }
}

fn mean_nearest_sq(a: &PointCloud, b: &PointCloud) -> f64 {
    let sum: f64 = a
        .points()
        .iter()
        .map(|&p| {
            b.points()
                .iter()
                .map(|&q| geom::dist2(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / a.len() as f64
}

/// Mean squared nearest-neighbour distance from `a` to `b` plus the same
/// from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    mean_nearest_sq(a, b) + mean_nearest_sq(b, a)
}

/// Mean Euclidean distance under the optimal one-to-one matching.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid_input(format!(
            "EMD needs equal cloud sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() > EMD_MAX_POINTS {
        return Err(Error::invalid_input(format!(
            "EMD is solved exactly for at most {EMD_MAX_POINTS} points; subsample first"
        )));
    }
    let n = a.len();
    let cost: Vec<f64> = a
        .points()
        .iter()
        .flat_map(|&p| b.points().iter().map(move |&q| geom::dist2(p, q).sqrt()))
        .collect();
    let assignment = min_cost_assignment(&cost, n);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(total / n as f64)
}

/// Exact minimum-cost perfect matching on a dense `n × n` cost matrix by
/// successive shortest augmenting paths with dual potentials (O(n³)).
/// Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based rows/columns; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &b), 2.0);
        assert_eq!(chamfer(&a, &a), 0.0);
        let c = cloud(&[[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert_eq!(chamfer(&b, &c), chamfer(&c, &b));
    }

    #[test]
    fn emd_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(emd(&a, &b).unwrap(), 0.0);
        assert!(emd(&a, &cloud(&[[0.0; 3]])).is_err());
    }

    #[test]
    fn assignment_small() {
        // optimum pairs rows with columns (1, 0, 2), total 5
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }
}
