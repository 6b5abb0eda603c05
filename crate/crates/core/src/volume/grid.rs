use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point3;

const VOL_MAGIC: &[u8; 4] = b"WVOL";
pub const VOL_HEADER_LEN: usize = 16;

/// Dense cubic scalar field over `[-extent, +extent]³`.
///
/// Values are stored row-major with z varying fastest:
/// `index = (i * N + j) * N + k` for grid coordinates `(i, j, k)` along
/// `(x, y, z)`. Samples are cell-centered, so index `i` sits at
/// `-extent + (i + 0.5) * 2 * extent / N`.
///
/// `truncation` is the TSDF bound τ, or 0 for volumes that are not TSDFs
/// (wavelet coefficients, noise, network outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    resolution: usize,
    extent: f64,
    truncation: f64,
    values: Vec<f64>,
}

impl VolumeGrid {
    pub fn new(resolution: usize, extent: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_truncation(resolution, extent, 0.0, values)
    }

    pub fn with_truncation(
        resolution: usize,
        extent: f64,
        truncation: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid_input("volume resolution must be positive"));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::invalid_input(format!(
                "volume extent {extent} must be positive"
            )));
        }
        if !(truncation >= 0.0 && truncation.is_finite()) {
            return Err(Error::invalid_input(format!(
                "truncation {truncation} must be >= 0"
            )));
        }
        let expected = resolution * resolution * resolution;
        if values.len() != expected {
            return Err(Error::invalid_input(format!(
                "volume of resolution {resolution} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_input(format!(
                "non-finite volume value at index {pos}"
            )));
        }
        if truncation > 0.0 {
            if let Some(v) = values.iter().find(|v| v.abs() > truncation) {
                return Err(Error::invalid_input(format!(
                    "TSDF value {v} outside [-{truncation}, {truncation}]"
                )));
            }
        }
        Ok(VolumeGrid {
            resolution,
            extent,
            truncation,
            values,
        })
    }

    pub fn zeros(resolution: usize, extent: f64) -> Self {
        Self::filled(resolution, extent, 0.0)
    }

    pub fn filled(resolution: usize, extent: f64, value: f64) -> Self {
        VolumeGrid {
            resolution,
            extent,
            truncation: 0.0,
            values: vec![value; resolution * resolution * resolution],
        }
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every grid index.
    pub fn from_fn(
        resolution: usize,
        extent: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(resolution * resolution * resolution);
        for i in 0..resolution {
            for j in 0..resolution {
                for k in 0..resolution {
                    values.push(f(i, j, k));
                }
            }
        }
        VolumeGrid {
            resolution,
            extent,
            truncation: 0.0,
            values,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn is_tsdf(&self) -> bool {
        self.truncation > 0.0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spacing between neighbouring samples.
    pub fn voxel_size(&self) -> f64 {
        2.0 * self.extent / self.resolution as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Spatial coordinate of grid index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.voxel_size()
    }

    pub fn location(&self, i: usize, j: usize, k: usize) -> Point3 {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Nearest grid index to spatial coordinate `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let f = ((x + self.extent) / self.voxel_size()).floor();
        f.clamp(0.0, (self.resolution - 1) as f64) as usize
    }

    /// Trilinear interpolation between cell centers; clamps outside the
    /// outermost sample layer.
    pub fn trilinear(&self, p: Point3) -> f64 {
        let n = self.resolution;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] + self.extent) / self.voxel_size() - 0.5;
            let u = u.clamp(0.0, (n - 1) as f64);
            let b = (u.floor() as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = if n > 1 { u - b as f64 } else { 0.0 };
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let bit = (corner >> (2 - a)) & 1;
                idx[a] = (base[a] + bit).min(n - 1);
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.get(idx[0], idx[1], idx[2]);
            }
        }
        acc
    }

    /// Elementwise map preserving geometry; the result is not a TSDF.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> VolumeGrid {
        VolumeGrid {
            resolution: self.resolution,
            extent: self.extent,
            truncation: 0.0,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-resolution volumes.
    pub fn zip_map(&self, other: &VolumeGrid, f: impl Fn(f64, f64) -> f64) -> Result<VolumeGrid> {
        self.check_same_shape(other)?;
        Ok(VolumeGrid {
            resolution: self.resolution,
            extent: self.extent,
            truncation: 0.0,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &VolumeGrid) -> Result<()> {
        if self.resolution != other.resolution {
            return Err(Error::invalid_input(format!(
                "resolution mismatch: {} vs {}",
                self.resolution, other.resolution
            )));
        }
        Ok(())
    }

    /// Same values with new physical metadata.
    pub fn relabel(self, extent: f64, truncation: f64) -> Result<VolumeGrid> {
        VolumeGrid::with_truncation(self.resolution, extent, truncation, self.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn encode_vol(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(VOL_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(VOL_MAGIC);
        out.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        out.extend_from_slice(&(self.extent as f32).to_le_bytes());
        out.extend_from_slice(&(self.truncation as f32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Parses one `.vol` payload from the front of `bytes`, returning the
    /// volume and the number of bytes consumed.
    pub fn decode_vol(bytes: &[u8]) -> Result<(VolumeGrid, usize)> {
        if bytes.len() < VOL_HEADER_LEN {
            return Err(Error::format("truncated .vol header"));
        }
        if &bytes[..4] != VOL_MAGIC {
            return Err(Error::format("bad .vol magic"));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let extent = f32::from_le_bytes(bytes[8..12].try_into().unwrap()) as f64;
        let truncation = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
        let count = n
            .checked_mul(n)
            .and_then(|v| v.checked_mul(n))
            .ok_or_else(|| Error::format("absurd .vol resolution"))?;
        let end = VOL_HEADER_LEN + 4 * count;
        if bytes.len() < end {
            return Err(Error::format(format!(
                ".vol payload truncated: need {end} bytes, have {}",
                bytes.len()
            )));
        }
        let values = bytes[VOL_HEADER_LEN..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let grid = VolumeGrid::with_truncation(n, extent, truncation, values)
            .map_err(|e| Error::format(format!("invalid .vol contents: {e}")))?;
        Ok((grid, end))
    }

    pub fn write_vol(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode_vol())?;
        Ok(())
    }

    pub fn read_vol(path: impl AsRef<Path>) -> Result<VolumeGrid> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let (grid, used) = Self::decode_vol(&bytes)?;
        if used != bytes.len() {
            return Err(Error::format("trailing bytes after .vol payload"));
        }
        Ok(grid)
    }
}
