use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::rng::split_seed;
use crate::error::{Error, Result};
use crate::isosurface::marching_cubes;
use crate::metrics::{evaluate, sample_surface, MetricReport, PointCloud};
use crate::nn::Checkpoint;
use crate::volume::TriangleMesh;
use crate::wavelet::{reconstruct_from_pair, FilterBank, WaveletPair};

use super::config::{EvaluationConfig, PipelineConfig};
use super::generate::{generate_shapes, GenerationOutcome};

/// Keeps reference sampling streams apart from generated ones.
const REFERENCE_SALT: u64 = 0x5245_4645_5245_4e43;

/// Surface samples of each mesh; mesh `i` uses seed `split_seed(seed, i)`.
/// A mesh with no surface is scored as `points` copies of the origin rather
/// than dropped, so failed shapes still count against a model.
pub fn mesh_clouds(meshes: &[TriangleMesh], points: usize, seed: u64) -> Result<Vec<PointCloud>> {
    meshes
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            if m.surface_area() > 0.0 {
                sample_surface(m, points, split_seed(seed, i as u64))
            } else {
                warn!("mesh {i} has no surface; scoring it as a point at the origin");
                PointCloud::new(vec![[0.0; 3]; points])
            }
        })
        .collect()
}

/// Zero iso-surfaces of the pairs' reconstructions.
pub fn pair_meshes(pairs: &[WaveletPair], fb: &FilterBank) -> Result<Vec<TriangleMesh>> {
    pairs
        .par_iter()
        .map(|p| Ok(marching_cubes(&reconstruct_from_pair(p, fb)?, 0.0)))
        .collect()
}

/// Every `.obj` in `dir`, in file-name order.
pub fn load_mesh_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, TriangleMesh)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::invalid_input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let mesh = TriangleMesh::read_obj(&p)
                .map_err(|e| Error::invalid_input(format!("{}: {e}", p.display())))?;
            Ok((p, mesh))
        })
        .collect()
}

/// Samples both mesh sets and scores the generated one against the
/// references.
pub fn evaluate_meshes(
    gen: &[TriangleMesh],
    refs: &[TriangleMesh],
    cfg: &EvaluationConfig,
) -> Result<MetricReport> {
    let g = mesh_clouds(gen, cfg.points, cfg.seed)?;
    let r = mesh_clouds(refs, cfg.points, cfg.seed ^ REFERENCE_SALT)?;
    evaluate(&g, &r, &cfg.metric_config())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Full,
    NoDetail,
}

impl AblationMode {
    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoDetail => "no-detail",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no-detail" => Ok(AblationMode::NoDetail),
            _ => Err(Error::invalid_config(format!(
                "unknown ablation mode {s:?}; expected full or no-detail"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub mode: AblationMode,
    pub report: MetricReport,
    pub generation: GenerationOutcome,
}

/// Generates `cfg.generation.count` shapes under `mode` into
/// `out_dir/<mode>` and scores them against the reconstructed training
/// pairs. The reference set depends only on the pairs and the evaluation
/// seed, so every mode is scored against the same clouds.
pub fn run_ablation(
    mode: AblationMode,
    pairs: &[WaveletPair],
    generator: &Checkpoint,
    detail: Option<&Checkpoint>,
    out_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<AblationOutcome> {
    let detail =
        match mode {
            AblationMode::Full => Some(detail.ok_or_else(|| {
                Error::invalid_config("the full pipeline needs a detail checkpoint")
            })?),
            AblationMode::NoDetail => None,
        };
    let generation = generate_shapes(
        generator,
        detail,
        cfg.generation.count,
        out_dir.as_ref().join(mode.label()),
        cfg,
    )?;
    let gen_meshes = generation
        .meshes
        .iter()
        .map(TriangleMesh::read_obj)
        .collect::<Result<Vec<_>>>()?;
    let ref_meshes = pair_meshes(pairs, &cfg.filter_bank()?)?;
    let report = evaluate_meshes(&gen_meshes, &ref_meshes, &cfg.evaluation)?;
    Ok(AblationOutcome {
        mode,
        report,
        generation,
    })
}
