use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::metrics::{EvalConfig, EMD_MAX_POINTS};
use crate::nn::{ArchConfig, NetKind, TrainConfig};
use crate::volume::TsdfConfig;
use crate::wavelet::FilterBank;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletConfig {
    pub filter: String,
    /// Decomposition depth `J`.
    pub levels: usize,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            filter: "bior6.8".into(),
            levels: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub count: usize,
    pub seed: u64,
    /// 1 runs the full ancestral chain; `f > 1` visits every `f`-th step.
    pub subsample_factor: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            count: 5,
            seed: 0,
            subsample_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Surface samples per shape.
    pub points: usize,
    /// Per-cloud cap for EMD.
    pub emd_points: usize,
    pub seed: u64,
    pub chamfer: bool,
    pub emd: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            points: 2048,
            emd_points: EMD_MAX_POINTS,
            seed: 0,
            chamfer: true,
            emd: true,
        }
    }
}

impl EvaluationConfig {
    pub fn metric_config(&self) -> EvalConfig {
        EvalConfig {
            emd_points: self.emd_points,
            seed: self.seed,
            chamfer: self.chamfer,
            emd: self.emd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Directory of source OBJ meshes.
    pub meshes: PathBuf,
    /// Directory holding `.wvp` pairs and the manifest.
    pub dataset: PathBuf,
    pub generator_checkpoint: PathBuf,
    pub detail_checkpoint: PathBuf,
    /// Directory for generated meshes and reports.
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            meshes: "data/meshes".into(),
            dataset: "data/dataset".into(),
            generator_checkpoint: "runs/generator.ckpt".into(),
            detail_checkpoint: "runs/detail.ckpt".into(),
            output: "runs/generated".into(),
        }
    }
}

/// Everything the six pipeline commands need. Missing JSON fields take
/// their defaults; architecture objects must be given in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tsdf: TsdfConfig,
    pub wavelet: WaveletConfig,
    pub schedule: ScheduleConfig,
    pub generator: ArchConfig,
    pub detail: ArchConfig,
    pub train_generator: TrainConfig,
    pub train_detail: TrainConfig,
    pub generation: GenerationConfig,
    pub evaluation: EvaluationConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tsdf: TsdfConfig::default(),
            wavelet: WaveletConfig::default(),
            schedule: ScheduleConfig::default(),
            generator: ArchConfig::denoiser(vec![16, 32]),
            detail: ArchConfig::detail(vec![16, 32]),
            train_generator: TrainConfig::default(),
            train_detail: TrainConfig {
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            generation: GenerationConfig::default(),
            evaluation: EvaluationConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid_config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::invalid_config(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn filter_bank(&self) -> Result<FilterBank> {
        FilterBank::by_name(&self.wavelet.filter)
    }

    /// Side length of `C^J`.
    pub fn coarse_resolution(&self) -> usize {
        self.tsdf.resolution >> self.wavelet.levels
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_config(&self.schedule)
    }

    pub fn validate(&self) -> Result<()> {
        self.tsdf.validate()?;
        self.filter_bank()?;
        let (n, j) = (self.tsdf.resolution, self.wavelet.levels);
        if j == 0 || j >= usize::BITS as usize || n >> j < 2 || n % (1 << j) != 0 {
            return Err(Error::invalid_config(format!(
                "{j} wavelet levels do not fit resolution {n}; the coarse volume needs at least 2 samples per side"
            )));
        }
        self.noise_schedule()?;
        for (arch, kind, what) in [
            (&self.generator, NetKind::Denoiser, "generator"),
            (&self.detail, NetKind::Detail, "detail"),
        ] {
            if arch.kind != kind {
                return Err(Error::invalid_config(format!(
                    "{what} architecture has kind {:?}",
                    arch.kind
                )));
            }
            arch.validate()?;
            arch.check_resolution(self.coarse_resolution())?;
        }
        if self.generation.subsample_factor == 0
            || self.generation.subsample_factor > self.schedule.steps
        {
            return Err(Error::invalid_config(format!(
                "subsample factor {} must lie in [1, {}]",
                self.generation.subsample_factor, self.schedule.steps
            )));
        }
        if self.evaluation.points == 0 || self.evaluation.emd_points == 0 {
            return Err(Error::invalid_config(
                "evaluation needs a positive point count",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.coarse_resolution(), 8);
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"tsdf": {"resolution": 32, "extent": 0.45, "truncation": 0.1}, "wavelet": {"levels": 2}}"#)
                .unwrap();
        assert_eq!(cfg.coarse_resolution(), 8);
        assert_eq!(cfg.wavelet.filter, "bior6.8");
        assert_eq!(cfg.generation.subsample_factor, 10);
    }

    #[test]
    fn rejects_inconsistent_levels() {
        let mut cfg = PipelineConfig::default();
        cfg.wavelet.levels = 6;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = PipelineConfig::default();
        cfg.wavelet.filter = "db4".into();
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = PipelineConfig::default();
        cfg.generator = ArchConfig::denoiser(vec![8]);
        cfg.tsdf.resolution = 128;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("add encoder stages"));
    }
}
