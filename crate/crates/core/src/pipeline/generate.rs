use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::rng::split_seed;
use crate::diffusion::{sample, Affine, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::isosurface::marching_cubes;
use crate::nn::{ArchConfig, Checkpoint, DetailModel, GeneratorModel};
use crate::volume::{TriangleMesh, VolumeGrid};
use crate::wavelet::{reconstruct_from_pair, WaveletPair};

use super::config::PipelineConfig;

pub const METADATA_FILE: &str = "generation.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub index: usize,
    pub seed: u64,
    /// File name relative to the output directory.
    pub mesh: PathBuf,
    pub vertices: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub base_seed: u64,
    pub subsample_factor: usize,
    /// False when shapes were reconstructed with `D = 0`.
    pub detail_predictor: bool,
    pub generator: ArchConfig,
    pub detail: Option<ArchConfig>,
    pub shapes: Vec<ShapeRecord>,
}

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub meshes: Vec<PathBuf>,
    pub metadata: GenerationMetadata,
}

/// Runs one reverse chain and decodes it: `C_0` is denormalized, the detail
/// volume comes from `detail` (zero without one), and the pair is
/// reconstructed to the source resolution.
pub fn synthesize_volume<D: Denoiser>(
    denoiser: &D,
    normalization: Affine,
    schedule: &NoiseSchedule,
    detail: Option<&DetailModel>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<VolumeGrid> {
    let (res, extent) = (cfg.coarse_resolution(), cfg.tsdf.extent);
    let trace = sample(
        denoiser,
        schedule,
        res,
        extent,
        cfg.generation.subsample_factor,
        seed,
        0,
    )?;
    let coarse = normalization.invert(&trace.final_volume);
    let d = match detail {
        Some(model) => model.predict(&coarse)?,
        None => VolumeGrid::zeros(2 * res, extent),
    };
    let pair = WaveletPair::new(cfg.wavelet.levels, coarse, d, cfg.tsdf)?;
    reconstruct_from_pair(&pair, &cfg.filter_bank()?)
}

fn describe(arch: &ArchConfig, resolution: usize) -> String {
    format!(
        "{} at coarse resolution {resolution}",
        serde_json::to_string(arch).unwrap_or_else(|_| format!("{arch:?}"))
    )
}

/// Checkpoint architecture and training resolution must equal the
/// configured ones.
pub fn check_compatible(ckpt: &Checkpoint, expected: &ArchConfig, resolution: usize) -> Result<()> {
    if ckpt.arch != *expected || ckpt.resolution != resolution {
        return Err(Error::Incompatible {
            expected: describe(expected, resolution),
            found: describe(&ckpt.arch, ckpt.resolution),
        });
    }
    Ok(())
}

/// Shapes `0..count` go to `shape_XXXX.obj` in `out_dir` with
/// `generation.json` alongside. Shape `i` uses seed `split_seed(base, i)`,
/// so any shape can be regenerated on its own.
pub fn generate_shapes(
    generator: &Checkpoint,
    detail: Option<&Checkpoint>,
    count: usize,
    out_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<GenerationOutcome> {
    let out_dir = out_dir.as_ref();
    cfg.validate()?;
    let res = cfg.coarse_resolution();
    check_compatible(generator, &cfg.generator, res)?;
    let gen_model = GeneratorModel::from_checkpoint(generator)?;
    if generator.schedule != Some(cfg.schedule) {
        warn!(
            "sampling with the checkpoint's noise schedule, which differs from the configured one"
        );
    }
    let detail_model = match detail {
        Some(ckpt) => {
            check_compatible(ckpt, &cfg.detail, res)?;
            Some(DetailModel::from_checkpoint(ckpt)?)
        }
        None => {
            warn!("no detail checkpoint: reconstructing coarse-only shapes (D = 0)");
            None
        }
    };
    fs::create_dir_all(out_dir)?;
    let base = cfg.generation.seed;
    let shapes = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = split_seed(base, i as u64);
            let volume = synthesize_volume(
                &gen_model,
                gen_model.normalization,
                &gen_model.schedule,
                detail_model.as_ref(),
                cfg,
                seed,
            )?;
            let mesh = marching_cubes(&volume, 0.0);
            if mesh.is_empty() {
                warn!("shape {i} has no zero crossing; writing an empty mesh");
            }
            let name = PathBuf::from(format!("shape_{i:04}.obj"));
            mesh.write_obj(out_dir.join(&name))?;
            Ok(ShapeRecord {
                index: i,
                seed,
                mesh: name,
                vertices: mesh.vertices().len(),
                triangles: mesh.triangles().len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = GenerationMetadata {
        base_seed: base,
        subsample_factor: cfg.generation.subsample_factor,
        detail_predictor: detail_model.is_some(),
        generator: generator.arch.clone(),
        detail: detail.map(|c| c.arch.clone()),
        shapes,
    };
    let mut text = serde_json::to_string_pretty(&metadata)?;
    text.push('\n');
    fs::write(out_dir.join(METADATA_FILE), text)?;
    info!("wrote {count} shapes to {}", out_dir.display());
    Ok(GenerationOutcome {
        meshes: metadata
            .shapes
            .iter()
            .map(|s| out_dir.join(&s.mesh))
            .collect(),
        metadata,
    })
}

/// Meshes referenced by a `generation.json`, in shape order.
pub fn load_generated(dir: impl AsRef<Path>) -> Result<(GenerationMetadata, Vec<TriangleMesh>)> {
    let dir = dir.as_ref();
    let meta: GenerationMetadata = serde_json::from_slice(&fs::read(dir.join(METADATA_FILE))?)?;
    let meshes = meta
        .shapes
        .iter()
        .map(|s| TriangleMesh::read_obj(dir.join(&s.mesh)))
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, meshes))
}
