use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::VolumeGrid;

use super::process::Denoiser;
use super::schedule::NoiseSchedule;

/// Exact ε-predictor for data distributed as i.i.d. `N(μ, s²)` per voxel:
/// `ε*(x, t) = √(1−ᾱ_t) (x − √ᾱ_t μ) / (ᾱ_t s² + 1 − ᾱ_t)`.
/// With a center volume, `μ` varies per voxel.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    pub mean: f64,
    pub std: f64,
    center: Option<Vec<f64>>,
    schedule: NoiseSchedule,
}

impl GaussianOracle {
    pub fn new(mean: f64, std: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::invalid_config(format!(
                "bad oracle parameters ({mean}, {std})"
            )));
        }
        Ok(GaussianOracle {
            mean,
            std,
            center: None,
            schedule,
        })
    }

    /// Data concentrated around one volume: voxel `i` is `N(center_i, s²)`.
    pub fn around(center: &VolumeGrid, std: f64, schedule: NoiseSchedule) -> Result<Self> {
        let mut oracle = Self::new(0.0, std, schedule)?;
        if !center.values().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_config("oracle center must be finite"));
        }
        oracle.center = Some(center.values().to_vec());
        Ok(oracle)
    }

    pub fn eps(&self, x: f64, t: usize) -> f64 {
        self.eps_with_mean(x, self.mean, t)
    }

    fn eps_with_mean(&self, x: f64, mean: f64, t: usize) -> f64 {
        let ab = self.schedule.alpha_bar(t);
        (1.0 - ab).sqrt() * (x - ab.sqrt() * mean) / (ab * self.std * self.std + 1.0 - ab)
    }
}

impl Denoiser for GaussianOracle {
    fn predict_eps(&self, corrupted: &VolumeGrid, t: usize) -> Result<VolumeGrid> {
        if t == 0 || t > self.schedule.steps() {
            return Err(Error::invalid_input(format!("step {t} outside schedule")));
        }
        match &self.center {
            None => Ok(corrupted.map(|x| self.eps(x, t))),
            Some(c) => {
                if c.len() != corrupted.values().len() {
                    return Err(Error::invalid_input(format!(
                        "oracle center has {} voxels, input has {}",
                        c.len(),
                        corrupted.values().len()
                    )));
                }
                let values = corrupted
                    .values()
                    .iter()
                    .zip(c)
                    .map(|(&x, &m)| self.eps_with_mean(x, m, t))
                    .collect();
                VolumeGrid::new(corrupted.resolution(), corrupted.extent(), values)
            }
        }
    }
}

/// Scalar affine normalization `x ↦ (x − shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: f64,
    pub scale: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Affine {
            shift: 0.0,
            scale: 1.0,
        }
    }
}

impl Affine {
    /// Mean and standard deviation over every voxel of every volume. A
    /// constant dataset gets scale 1.
    pub fn fit<'a>(volumes: impl IntoIterator<Item = &'a VolumeGrid>) -> Result<Affine> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in volumes {
            for &x in v.values() {
                n += 1;
                sum += x;
                sq += x * x;
            }
        }
        if n == 0 {
            return Err(Error::invalid_input(
                "cannot fit normalization to an empty dataset",
            ));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        Ok(Affine { shift: mean, scale })
    }

    pub fn apply(&self, v: &VolumeGrid) -> VolumeGrid {
        v.map(|x| (x - self.shift) / self.scale)
    }

    pub fn invert(&self, v: &VolumeGrid) -> VolumeGrid {
        v.map(|x| x * self.scale + self.shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_posterior_mean_of_noise() {
        // For x = √ᾱ c + √(1−ᾱ) ε with c ~ N(μ, s²), E[ε | x] is linear in x.
        let s = NoiseSchedule::default();
        let o = GaussianOracle::new(0.3, 0.5, s.clone()).unwrap();
        let t = 400;
        let ab = s.alpha_bar(t);
        let var_x = ab * 0.25 + 1.0 - ab;
        let cov = (1.0 - ab).sqrt();
        let x = 1.7;
        let want = cov / var_x * (x - ab.sqrt() * 0.3);
        assert!((o.eps(x, t) - want).abs() < 1e-15);
    }

    #[test]
    fn affine_roundtrip() {
        let v = VolumeGrid::from_fn(4, 1.0, |i, j, k| (i + 2 * j + 3 * k) as f64);
        let a = Affine::fit([&v]).unwrap();
        let n = a.apply(&v);
        assert!(n.mean().abs() < 1e-12);
        let back = a.invert(&n);
        for (x, y) in back.values().iter().zip(v.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(
            Affine::fit([&VolumeGrid::filled(2, 1.0, 3.0)])
                .unwrap()
                .scale,
            1.0
        );
    }
}
