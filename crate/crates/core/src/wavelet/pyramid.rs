use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{TsdfConfig, VolumeGrid};

use super::filters::FilterBank;
use super::transform::{dwt3_coarse, idwt3_coarse};

const WVP_MAGIC: &[u8; 4] = b"WVPR";

/// Laplacian-style multi-level decomposition.
///
/// `coarse[j - 1]` holds `C^j` and `detail[j - 1]` holds
/// `D^j = C^(j-1) − idwt3_coarse(C^j)` with `C^0` the input volume.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevels {
    pub coarse: Vec<VolumeGrid>,
    pub detail: Vec<VolumeGrid>,
    /// Sampling parameters of the decomposed volume.
    pub source: TsdfConfig,
}

impl PyramidLevels {
    pub fn depth(&self) -> usize {
        self.coarse.len()
    }
}

/// Compact shape encoding: the coarsest coefficient volume and the detail
/// volume one level finer.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPair {
    pub level: usize,
    pub coarse: VolumeGrid,
    pub detail: VolumeGrid,
    /// Sampling parameters of the originating TSDF. The `.wvp` format does
    /// not record the truncation, so decoded pairs carry `truncation = 0`.
    pub source: TsdfConfig,
}

pub fn decompose(tsdf: &VolumeGrid, fb: &FilterBank, levels: usize) -> Result<PyramidLevels> {
    if levels == 0 {
        return Err(Error::invalid_input(
            "decomposition depth must be at least 1",
        ));
    }
    let n = tsdf.resolution();
    if levels >= usize::BITS as usize || n % (1usize << levels) != 0 || n >> levels == 0 {
        return Err(Error::invalid_input(format!(
            "resolution {n} is not divisible by 2^{levels}"
        )));
    }
    let mut coarse = Vec::with_capacity(levels);
    let mut detail = Vec::with_capacity(levels);
    let mut parent = tsdf.clone();
    for _ in 0..levels {
        let c = dwt3_coarse(&parent, fb)?;
        let up = idwt3_coarse(&c, fb)?;
        detail.push(parent.zip_map(&up, |a, b| a - b)?);
        coarse.push(c.clone());
        parent = c;
    }
    Ok(PyramidLevels {
        coarse,
        detail,
        source: TsdfConfig {
            resolution: n,
            extent: tsdf.extent(),
            truncation: tsdf.truncation(),
        },
    })
}

/// Inverts [`decompose`] using every detail level.
pub fn reconstruct_full(levels: &PyramidLevels, fb: &FilterBank) -> Result<VolumeGrid> {
    let mut current = levels
        .coarse
        .last()
        .ok_or_else(|| Error::invalid_input("empty pyramid"))?
        .clone();
    for d in levels.detail.iter().rev() {
        let up = idwt3_coarse(&current, fb)?;
        current = up.zip_map(d, |a, b| a + b)?;
    }
    Ok(current)
}

/// Keeps `(C^J, D^J)` of the deepest level and discards finer details.
pub fn compact_pair(levels: &PyramidLevels) -> Result<WaveletPair> {
    let level = levels.depth();
    let (Some(coarse), Some(detail)) = (levels.coarse.last(), levels.detail.last()) else {
        return Err(Error::invalid_input("empty pyramid"));
    };
    WaveletPair::new(level, coarse.clone(), detail.clone(), levels.source)
}

/// `C^(J-1) = idwt3_coarse(C^J) + D^J`, then plain coarse synthesis back to
/// the source resolution.
pub fn reconstruct_from_pair(pair: &WaveletPair, fb: &FilterBank) -> Result<VolumeGrid> {
    let up = idwt3_coarse(&pair.coarse, fb)?;
    let mut current = up.zip_map(&pair.detail, |a, b| a + b)?;
    for _ in 1..pair.level {
        current = idwt3_coarse(&current, fb)?;
    }
    Ok(current)
}

/// Share of the source volume's coefficients kept by the compact pair:
/// `((N/2^J)³ + (N/2^(J-1))³) / N³`.
pub fn retained_fraction(resolution: usize, level: usize) -> f64 {
    let n = resolution as f64;
    let c = n / 2f64.powi(level as i32);
    let d = 2.0 * c;
    (c.powi(3) + d.powi(3)) / n.powi(3)
}

impl WaveletPair {
    pub fn new(
        level: usize,
        coarse: VolumeGrid,
        detail: VolumeGrid,
        source: TsdfConfig,
    ) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid_input("wavelet pair level must be >= 1"));
        }
        if coarse.resolution() * 2 != detail.resolution() {
            return Err(Error::invalid_input(format!(
                "detail resolution {} must be twice the coarse resolution {}",
                detail.resolution(),
                coarse.resolution()
            )));
        }
        Ok(WaveletPair {
            level,
            coarse,
            detail,
            source,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WVP_MAGIC);
        out.extend_from_slice(&(self.level as u32).to_le_bytes());
        out.extend_from_slice(&self.coarse.encode_vol());
        out.extend_from_slice(&self.detail.encode_vol());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<WaveletPair> {
        if bytes.len() < 8 || &bytes[..4] != WVP_MAGIC {
            return Err(Error::format("bad .wvp magic"));
        }
        let level = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let (coarse, used_c) = VolumeGrid::decode_vol(&bytes[8..])?;
        let (detail, used_d) = VolumeGrid::decode_vol(&bytes[8 + used_c..])?;
        if 8 + used_c + used_d != bytes.len() {
            return Err(Error::format("trailing bytes after .wvp payload"));
        }
        let resolution = coarse.resolution() << level;
        let extent = coarse.extent();
        WaveletPair::new(
            level,
            coarse,
            detail,
            TsdfConfig {
                resolution,
                extent,
                truncation: 0.0,
            },
        )
        .map_err(|e| Error::format(format!("inconsistent .wvp: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<WaveletPair> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(n: usize, seed: u64) -> VolumeGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeGrid::from_fn(n, 0.45, |_, _, _| rng.random_range(-0.1..0.1))
    }

    #[test]
    fn pyramid_shapes() {
        let fb = FilterBank::bior68();
        let levels = decompose(&random_volume(32, 1), &fb, 3).unwrap();
        let res: Vec<usize> = levels.coarse.iter().map(VolumeGrid::resolution).collect();
        assert_eq!(res, vec![16, 8, 4]);
        let res: Vec<usize> = levels.detail.iter().map(VolumeGrid::resolution).collect();
        assert_eq!(res, vec![32, 16, 8]);
    }

    #[test]
    fn single_level_detail_is_the_residual() {
        let fb = FilterBank::bior68();
        let v = random_volume(16, 2);
        let levels = decompose(&v, &fb, 1).unwrap();
        let up = idwt3_coarse(&dwt3_coarse(&v, &fb).unwrap(), &fb).unwrap();
        for ((d, a), b) in levels.detail[0]
            .values()
            .iter()
            .zip(v.values())
            .zip(up.values())
        {
            assert_eq!(*d, a - b);
        }
    }

    #[test]
    fn indivisible_resolution_is_rejected() {
        let fb = FilterBank::haar();
        assert!(decompose(&VolumeGrid::zeros(12, 1.0), &fb, 3).is_err());
        assert!(decompose(&VolumeGrid::zeros(8, 1.0), &fb, 0).is_err());
    }

    #[test]
    fn pair_reconstruction_restores_parent_level() {
        let fb = FilterBank::bior68();
        let levels = decompose(&random_volume(32, 3), &fb, 3).unwrap();
        let pair = compact_pair(&levels).unwrap();
        assert_eq!((pair.coarse.resolution(), pair.detail.resolution()), (4, 8));
        let up = idwt3_coarse(&pair.coarse, &fb).unwrap();
        let parent = up.zip_map(&pair.detail, |a, b| a + b).unwrap();
        for (a, b) in parent.values().iter().zip(levels.coarse[1].values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pair_reconstructs_zero() {
        let fb = FilterBank::bior68();
        let pair = WaveletPair::new(
            3,
            VolumeGrid::zeros(4, 0.45),
            VolumeGrid::zeros(8, 0.45),
            TsdfConfig::with_resolution(32),
        )
        .unwrap();
        let v = reconstruct_from_pair(&pair, &fb).unwrap();
        assert_eq!(v.resolution(), 32);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn retained_fraction_at_256() {
        let f = retained_fraction(256, 3);
        assert!((f - (32f64.powi(3) + 64f64.powi(3)) / 256f64.powi(3)).abs() < 1e-15);
        assert!((f - 0.017578125).abs() < 1e-15);
    }

    #[test]
    fn wvp_layout() {
        let levels = decompose(&random_volume(16, 4), &FilterBank::haar(), 2).unwrap();
        let pair = compact_pair(&levels).unwrap();
        let bytes = pair.encode();
        assert_eq!(&bytes[..4], b"WVPR");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(&bytes[8..12], b"WVOL");
        assert_eq!(bytes.len(), 8 + (16 + 4 * 64) + (16 + 4 * 512));
        let back = WaveletPair::decode(&bytes).unwrap();
        assert_eq!(back.level, 2);
        assert_eq!(back.source.resolution, 16);
        assert!(WaveletPair::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
