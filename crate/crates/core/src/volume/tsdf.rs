use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::grid::VolumeGrid;
use super::mesh::TriangleMesh;
use super::sdf::MeshSdf;

/// Sampling parameters for truncated signed distance volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsdfConfig {
    /// Samples per axis; a power of two, at least 8.
    pub resolution: usize,
    /// Half-width of the cubic domain.
    pub extent: f64,
    /// Truncation bound τ.
    pub truncation: f64,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        TsdfConfig {
            resolution: 64,
            extent: 0.45,
            truncation: 0.1,
        }
    }
}

impl TsdfConfig {
    pub fn with_resolution(resolution: usize) -> Self {
        TsdfConfig {
            resolution,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 8 || !self.resolution.is_power_of_two() {
            return Err(Error::invalid_config(format!(
                "TSDF resolution {} must be a power of two >= 8",
                self.resolution
            )));
        }
        if !(self.truncation > 0.0 && self.truncation <= self.extent) {
            return Err(Error::invalid_config(format!(
                "truncation {} must lie in (0, extent = {}]",
                self.truncation, self.extent
            )));
        }
        Ok(())
    }
}

/// Samples the mesh's signed distance at cell centers and clamps it to
/// `[-τ, +τ]`. The mesh is expected to be normalized to `cfg.extent`.
pub fn sample_tsdf(mesh: &TriangleMesh, cfg: &TsdfConfig) -> Result<VolumeGrid> {
    cfg.validate()?;
    if mesh.is_empty() {
        return Err(Error::invalid_input(
            "cannot sample a TSDF from an empty mesh",
        ));
    }
    if !mesh.is_watertight() {
        warn!("mesh is not watertight; TSDF signs may be wrong near open boundaries");
    }
    let sdf = MeshSdf::new(mesh);
    let n = cfg.resolution;
    let tau = cfg.truncation;
    let probe = VolumeGrid::zeros(n, cfg.extent);
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let sdf = &sdf;
            let probe = &probe;
            (0..n * n).map(move |jk| {
                let (j, k) = (jk / n, jk % n);
                sdf.signed_distance(probe.location(i, j, k))
                    .clamp(-tau, tau)
            })
        })
        .collect();
    VolumeGrid::with_truncation(n, cfg.extent, tau, values)
}

/// TSDF of an analytic signed distance function, sampled the same way as
/// [`sample_tsdf`].
pub fn sample_analytic_tsdf(
    cfg: &TsdfConfig,
    sdf: impl Fn([f64; 3]) -> f64 + Sync,
) -> Result<VolumeGrid> {
    cfg.validate()?;
    let n = cfg.resolution;
    let tau = cfg.truncation;
    let probe = VolumeGrid::zeros(n, cfg.extent);
    let values: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            sdf(probe.location(i, j, k)).clamp(-tau, tau)
        })
        .collect();
    VolumeGrid::with_truncation(n, cfg.extent, tau, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn config_validation() {
        assert!(TsdfConfig::with_resolution(48).validate().is_err());
        assert!(TsdfConfig::with_resolution(4).validate().is_err());
        assert!(TsdfConfig {
            truncation: 0.5,
            ..TsdfConfig::default()
        }
        .validate()
        .is_err());
        assert!(TsdfConfig::default().validate().is_ok());
    }

    #[test]
    fn sphere_corners_are_fully_truncated() {
        let sphere = shapes::icosphere(0.3, 3);
        let cfg = TsdfConfig::with_resolution(32);
        let g = sample_tsdf(&sphere, &cfg).unwrap();
        let last = 31;
        for &(i, j, k) in &[(0, 0, 0), (last, 0, 0), (0, last, last), (last, last, last)] {
            assert_eq!(g.get(i, j, k), 0.1);
        }
        assert!(g.values().iter().all(|v| v.abs() <= 0.1));
        // re-clamping is a no-op
        assert!(g.values().iter().all(|&v| v.clamp(-0.1, 0.1) == v));
    }

    #[test]
    fn non_power_of_two_is_config_error() {
        let sphere = shapes::icosphere(0.3, 1);
        let err = sample_tsdf(&sphere, &TsdfConfig::with_resolution(24)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
