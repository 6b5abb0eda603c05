use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cloud::PointCloud;
use super::distance::{DistanceKind, EMD_MAX_POINTS};

/// Row-major `rows × cols` matrix of set-to-set distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// All pairwise distances, evaluated in parallel.
    pub fn compute(
        a: &[PointCloud],
        b: &[PointCloud],
        kind: DistanceKind,
    ) -> Result<DistanceMatrix> {
        let values = (0..a.len() * b.len())
            .into_par_iter()
            .map(|k| kind.eval(&a[k / b.len()], &b[k % b.len()]))
            .collect::<Result<Vec<f64>>>()?;
        Ok(DistanceMatrix {
            rows: a.len(),
            cols: b.len(),
            values,
        })
    }

    /// Distances within one set; each unordered pair is evaluated once and
    /// the diagonal is zero.
    pub fn symmetric(a: &[PointCloud], kind: DistanceKind) -> Result<DistanceMatrix> {
        let n = a.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let upper = pairs
            .par_iter()
            .map(|&(i, j)| kind.eval(&a[i], &a[j]))
            .collect::<Result<Vec<f64>>>()?;
        let mut values = vec![0.0; n * n];
        for (&(i, j), d) in pairs.iter().zip(upper) {
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
        Ok(DistanceMatrix {
            rows: n,
            cols: n,
            values,
        })
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    // first index wins ties
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn nonempty(gen: &[PointCloud], refs: &[PointCloud]) -> Result<()> {
    if gen.is_empty() || refs.is_empty() {
        return Err(Error::invalid_input("metric sets must be non-empty"));
    }
    Ok(())
}

/// Mean over reference clouds of the distance to the closest generated one,
/// from a `gen × ref` matrix.
pub fn mmd_from_matrix(gen_ref: &DistanceMatrix) -> f64 {
    let sum: f64 = (0..gen_ref.cols)
        .map(|r| {
            (0..gen_ref.rows)
                .map(|g| gen_ref.get(g, r))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / gen_ref.cols as f64
}

/// Share of reference clouds that are the nearest neighbour of at least one
/// generated cloud, from a `gen × ref` matrix.
pub fn coverage_from_matrix(gen_ref: &DistanceMatrix) -> f64 {
    let mut hit = vec![false; gen_ref.cols];
    for g in 0..gen_ref.rows {
        hit[argmin((0..gen_ref.cols).map(|r| gen_ref.get(g, r)))] = true;
    }
    hit.iter().filter(|&&h| h).count() as f64 / gen_ref.cols as f64
}

/// Leave-one-out 1-nearest-neighbour accuracy over `gen ∪ ref`, ordered
/// generated first; ties go to the lowest index in that order.
pub fn one_nna_from_matrices(
    gen_gen: &DistanceMatrix,
    gen_ref: &DistanceMatrix,
    ref_ref: &DistanceMatrix,
) -> f64 {
    let (ng, nr) = (gen_ref.rows, gen_ref.cols);
    let dist = |i: usize, j: usize| match (i < ng, j < ng) {
        (true, true) => gen_gen.get(i, j),
        (true, false) => gen_ref.get(i, j - ng),
        (false, true) => gen_ref.get(j, i - ng),
        (false, false) => ref_ref.get(i - ng, j - ng),
    };
    let total = ng + nr;
    let correct = (0..total)
        .filter(|&i| {
            let nn = argmin((0..total).map(|j| if j == i { f64::INFINITY } else { dist(i, j) }));
            (nn < ng) == (i < ng)
        })
        .count();
    correct as f64 / total as f64
}

pub fn mmd(gen: &[PointCloud], refs: &[PointCloud], kind: DistanceKind) -> Result<f64> {
    nonempty(gen, refs)?;
    Ok(mmd_from_matrix(&DistanceMatrix::compute(gen, refs, kind)?))
}

pub fn coverage(gen: &[PointCloud], refs: &[PointCloud], kind: DistanceKind) -> Result<f64> {
    nonempty(gen, refs)?;
    Ok(coverage_from_matrix(&DistanceMatrix::compute(
        gen, refs, kind,
    )?))
}

pub fn one_nna(gen: &[PointCloud], refs: &[PointCloud], kind: DistanceKind) -> Result<f64> {
    if gen.len() < 2 || refs.len() < 2 {
        return Err(Error::invalid_input(
            "1-NNA needs at least two clouds per set",
        ));
    }
    Ok(one_nna_from_matrices(
        &DistanceMatrix::symmetric(gen, kind)?,
        &DistanceMatrix::compute(gen, refs, kind)?,
        &DistanceMatrix::symmetric(refs, kind)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "MMD")]
    Mmd,
    #[serde(rename = "COV")]
    Coverage,
    #[serde(rename = "1-NNA")]
    OneNna,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Mmd => "MMD",
            MetricKind::Coverage => "COV",
            MetricKind::OneNna => "1-NNA",
        }
    }
}

/// Scores under one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScores {
    pub kind: DistanceKind,
    pub mmd: f64,
    pub coverage: f64,
    pub one_nna: f64,
    pub gen_ref: DistanceMatrix,
    pub gen_gen: DistanceMatrix,
    pub ref_ref: DistanceMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scores: Vec<DistanceScores>,
}

impl MetricReport {
    pub fn get(&self, metric: MetricKind, kind: DistanceKind) -> Option<f64> {
        let s = self.scores.iter().find(|s| s.kind == kind)?;
        Some(match metric {
            MetricKind::Mmd => s.mmd,
            MetricKind::Coverage => s.coverage,
            MetricKind::OneNna => s.one_nna,
        })
    }

    /// CSV with columns `metric,distance_kind,value,unit_scale`; the raw
    /// value is `value × unit_scale`. MMD is in the distance's unit,
    /// COV and 1-NNA in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,distance_kind,value,unit_scale\n");
        for s in &self.scores {
            for (metric, raw, unit) in [
                (MetricKind::Mmd, s.mmd, s.kind.unit_scale()),
                (MetricKind::Coverage, s.coverage, 1e-2),
                (MetricKind::OneNna, s.one_nna, 1e-2),
            ] {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:e}",
                    metric.label(),
                    s.kind.label(),
                    raw / unit,
                    unit
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Clouds larger than this are subsampled before EMD.
    pub emd_points: usize,
    pub seed: u64,
    pub chamfer: bool,
    pub emd: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            emd_points: EMD_MAX_POINTS,
            seed: 0,
            chamfer: true,
            emd: true,
        }
    }
}

/// MMD, COV and 1-NNA under each distance enabled in `cfg`.
pub fn evaluate(gen: &[PointCloud], refs: &[PointCloud], cfg: &EvalConfig) -> Result<MetricReport> {
    if gen.len() < 2 || refs.len() < 2 {
        return Err(Error::invalid_input(
            "evaluation needs at least two clouds per set",
        ));
    }
    let mut scores = Vec::new();
    for (enabled, kind) in [
        (cfg.chamfer, DistanceKind::Chamfer),
        (cfg.emd, DistanceKind::EarthMovers),
    ] {
        if !enabled {
            continue;
        }
        let prep = |set: &[PointCloud], offset: u64| -> Vec<PointCloud> {
            match kind {
                DistanceKind::Chamfer => set.to_vec(),
                DistanceKind::EarthMovers => set
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        c.subsample(
                            cfg.emd_points.min(EMD_MAX_POINTS),
                            cfg.seed ^ (offset + i as u64),
                        )
                    })
                    .collect(),
            }
        };
        let (g, r) = (prep(gen, 0), prep(refs, 1 << 32));
        let gen_ref = DistanceMatrix::compute(&g, &r, kind)?;
        let gen_gen = DistanceMatrix::symmetric(&g, kind)?;
        let ref_ref = DistanceMatrix::symmetric(&r, kind)?;
        scores.push(DistanceScores {
            kind,
            mmd: mmd_from_matrix(&gen_ref),
            coverage: coverage_from_matrix(&gen_ref),
            one_nna: one_nna_from_matrices(&gen_gen, &gen_ref, &ref_ref),
            gen_ref,
            gen_gen,
            ref_ref,
        });
    }
    Ok(MetricReport { scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64) -> PointCloud {
        PointCloud::new(vec![[x, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn identical_sets() {
        let set: Vec<PointCloud> = (0..4).map(|i| pt(i as f64)).collect();
        for kind in [DistanceKind::Chamfer, DistanceKind::EarthMovers] {
            assert_eq!(mmd(&set, &set, kind).unwrap(), 0.0);
            assert_eq!(coverage(&set, &set, kind).unwrap(), 1.0);
        }
    }

    #[test]
    fn unrolled_definitions() {
        let (x, y, z) = (pt(0.0), pt(1.0), pt(3.0));
        let refs = [y.clone(), z.clone()];
        let kind = DistanceKind::Chamfer;
        let want = (kind.eval(&x, &y).unwrap() + kind.eval(&x, &z).unwrap()) / 2.0;
        assert_eq!(mmd(&[x.clone()], &refs, kind).unwrap(), want);
        assert_eq!(coverage(&[x], &refs, kind).unwrap(), 0.5);
    }

    #[test]
    fn separated_sets_are_classified() {
        let gen: Vec<PointCloud> = (0..5).map(|i| pt(i as f64 * 0.01)).collect();
        let refs: Vec<PointCloud> = (0..5).map(|i| pt(10.0 + i as f64 * 0.01)).collect();
        assert_eq!(one_nna(&gen, &refs, DistanceKind::Chamfer).unwrap(), 1.0);
        assert!(one_nna(&gen[..1], &refs, DistanceKind::Chamfer).is_err());
    }

    #[test]
    fn csv_layout() {
        let set: Vec<PointCloud> = (0..3).map(|i| pt(i as f64)).collect();
        let report = evaluate(&set, &set, &EvalConfig::default()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,distance_kind,value,unit_scale");
        assert_eq!(lines.len(), 7);
        assert!(lines.contains(&"COV,EMD,100.000000,1e-2"));
    }
}
