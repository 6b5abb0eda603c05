use crate::diffusion::{Affine, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::volume::VolumeGrid;

use super::checkpoint::Checkpoint;
use super::net::{NetKind, Network};
use super::tensor::Tensor;

fn as_batch(v: &VolumeGrid) -> Tensor {
    let n = v.resolution();
    Tensor::new(vec![1, 1, n, n, n], v.values().to_vec()).expect("cubic volume")
}

/// Trained ε-predictor together with the data normalization and schedule
/// it was trained with. Works in normalized coefficient space.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub net: Network,
    pub normalization: Affine,
    pub schedule: NoiseSchedule,
}

impl GeneratorModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<GeneratorModel> {
        if ckpt.arch.kind != NetKind::Denoiser {
            return Err(Error::Incompatible {
                expected: "generator checkpoint".into(),
                found: "detail checkpoint".into(),
            });
        }
        let sched_cfg = ckpt
            .schedule
            .ok_or_else(|| Error::format("generator checkpoint lacks its noise schedule"))?;
        Ok(GeneratorModel {
            net: ckpt.network()?,
            normalization: ckpt.input_norm,
            schedule: NoiseSchedule::from_config(&sched_cfg)?,
        })
    }
}

impl Denoiser for GeneratorModel {
    fn predict_eps(&self, corrupted: &VolumeGrid, t: usize) -> Result<VolumeGrid> {
        let y = self.net.forward(&as_batch(corrupted), Some(&[t]))?;
        VolumeGrid::new(corrupted.resolution(), corrupted.extent(), y.into_data())
    }
}

/// Trained detail regressor with its input and target normalizations.
#[derive(Debug, Clone)]
pub struct DetailModel {
    pub net: Network,
    pub input_norm: Affine,
    pub target_norm: Affine,
}

impl DetailModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<DetailModel> {
        if ckpt.arch.kind != NetKind::Detail {
            return Err(Error::Incompatible {
                expected: "detail checkpoint".into(),
                found: "generator checkpoint".into(),
            });
        }
        Ok(DetailModel {
            net: ckpt.network()?,
            input_norm: ckpt.input_norm,
            target_norm: ckpt.target_norm,
        })
    }

    /// Predicts `D` (raw coefficient units) from a raw coarse volume.
    pub fn predict(&self, coarse: &VolumeGrid) -> Result<VolumeGrid> {
        let y = self
            .net
            .forward(&as_batch(&self.input_norm.apply(coarse)), None)?;
        let detail = VolumeGrid::new(coarse.resolution() * 2, coarse.extent(), y.into_data())?;
        Ok(self.target_norm.invert(&detail))
    }
}
