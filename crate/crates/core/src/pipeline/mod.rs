//! End-to-end drivers: dataset preparation, training, generation and the
//! detail-predictor ablation, plus the JSON configuration they share.

mod ablation;
mod config;
mod dataset;
mod generate;

use std::path::Path;

pub use ablation::{
    evaluate_meshes, load_mesh_dir, mesh_clouds, pair_meshes, run_ablation, AblationMode,
    AblationOutcome,
};
pub use config::{EvaluationConfig, GenerationConfig, PathsConfig, PipelineConfig, WaveletConfig};
pub use dataset::{
    mesh_to_pair, pair_fidelity, prepare_dataset, sha256_hex, DatasetManifest, DatasetSettings,
    FailureRecord, ManifestEntry, PairFidelity, PrepareReport, MANIFEST_FILE,
};
pub use generate::{
    check_compatible, generate_shapes, load_generated, synthesize_volume, GenerationMetadata,
    GenerationOutcome, ShapeRecord, METADATA_FILE,
};

use crate::error::{Error, Result};
use crate::nn::{train_detail, train_generator, TrainOutcome};
use crate::wavelet::WaveletPair;

/// Pairs of a prepared dataset, after checking that it was built with the
/// configured sampling and wavelet settings.
pub fn load_dataset(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<Vec<WaveletPair>> {
    let dir = dir.as_ref();
    let manifest = DatasetManifest::load(dir)?;
    let s = &manifest.settings;
    if s.tsdf != cfg.tsdf || s.filter != cfg.wavelet.filter || s.levels != cfg.wavelet.levels {
        return Err(Error::invalid_config(format!(
            "dataset {} was prepared with {:?}, {} and J = {}; the configuration asks for {:?}, {} and J = {}",
            dir.display(),
            s.tsdf,
            s.filter,
            s.levels,
            cfg.tsdf,
            cfg.wavelet.filter,
            cfg.wavelet.levels
        )));
    }
    if manifest.entries.is_empty() {
        return Err(Error::invalid_input(format!(
            "dataset {} has no pairs",
            dir.display()
        )));
    }
    manifest.load_pairs(dir)
}

/// Trains the ε-predictor on the coarse volumes of `pairs`.
pub fn train_generator_on(pairs: &[WaveletPair], cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let coarse: Vec<_> = pairs.iter().map(|p| p.coarse.clone()).collect();
    train_generator(
        &coarse,
        cfg.generator.clone(),
        &cfg.schedule,
        &cfg.train_generator,
    )
}

/// Trains the detail predictor on `pairs`.
pub fn train_detail_on(pairs: &[WaveletPair], cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_detail(pairs, cfg.detail.clone(), &cfg.train_detail)
}
