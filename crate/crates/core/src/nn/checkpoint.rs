//! `.ckpt` files.
//!
//! Layout (little-endian): `"WNCK"`, u32 version, u32 descriptor length,
//! descriptor JSON, `P` f32 parameters, u64 Adam step, `P` f32 first
//! moments, `P` f32 second moments, four f64 normalization values (input
//! shift and scale, target shift and scale), then the SHA-256 of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{Affine, ScheduleConfig};
use crate::error::{Error, Result};

use super::adam::{Adam, AdamConfig};
use super::net::{ArchConfig, Network};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    arch: ArchConfig,
    param_count: usize,
    adam: AdamConfig,
    schedule: Option<ScheduleConfig>,
    iterations: usize,
    resolution: usize,
}

/// Trained network state. Parameters and moments are held at `f32`, the
/// precision they are stored at, so a network rebuilt from a checkpoint is
/// the same before and after a save/load cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub params: Vec<f32>,
    pub adam: AdamConfig,
    pub adam_step: u64,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    /// Applied to network inputs (the coarse volumes).
    pub input_norm: Affine,
    /// Applied to regression targets; identity for the generator.
    pub target_norm: Affine,
    /// Noise schedule the generator was trained with.
    pub schedule: Option<ScheduleConfig>,
    pub iterations: usize,
    /// Side length of the input volumes the network was trained on.
    pub resolution: usize,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format("bad length"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn from_training(
        net: &Network,
        adam: &Adam,
        input_norm: Affine,
        target_norm: Affine,
        schedule: Option<ScheduleConfig>,
        iterations: usize,
        resolution: usize,
    ) -> Checkpoint {
        Checkpoint {
            arch: net.arch().clone(),
            params: to_f32(net.params()),
            adam: adam.config,
            adam_step: adam.step,
            adam_m: to_f32(&adam.m),
            adam_v: to_f32(&adam.v),
            input_norm,
            target_norm,
            schedule,
            iterations,
            resolution,
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::from_params(
            self.arch.clone(),
            self.params.iter().map(|&x| x as f64).collect(),
        )
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let desc = Descriptor {
            arch: self.arch.clone(),
            param_count: self.params.len(),
            adam: self.adam,
            schedule: self.schedule,
            iterations: self.iterations,
            resolution: self.resolution,
        };
        let json = serde_json::to_vec(&desc)?;
        let mut out = Vec::with_capacity(64 + json.len() + 12 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.adam_step.to_le_bytes());
        for v in self.adam_m.iter().chain(&self.adam_v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [
            self.input_norm.shift,
            self.input_norm.scale,
            self.target_norm.shift,
            self.target_norm.scale,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 12 + 32 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format("checkpoint checksum mismatch"));
        }
        let mut r = Reader {
            bytes: body,
            pos: 4,
        };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible {
                expected: format!("checkpoint version {CHECKPOINT_VERSION}"),
                found: format!("version {version}"),
            });
        }
        let json_len = r.u32()? as usize;
        let desc: Descriptor = serde_json::from_slice(r.take(json_len)?)?;
        let p = desc.param_count;
        let params = r.f32s(p)?;
        let adam_step = r.u64()?;
        let adam_m = r.f32s(p)?;
        let adam_v = r.f32s(p)?;
        let input_norm = Affine {
            shift: r.f64()?,
            scale: r.f64()?,
        };
        let target_norm = Affine {
            shift: r.f64()?,
            scale: r.f64()?,
        };
        if r.pos != body.len() {
            return Err(Error::format("trailing bytes in checkpoint"));
        }
        let ckpt = Checkpoint {
            arch: desc.arch,
            params,
            adam: desc.adam,
            adam_step,
            adam_m,
            adam_v,
            input_norm,
            target_norm,
            schedule: desc.schedule,
            iterations: desc.iterations,
            resolution: desc.resolution,
        };
        // parameter count must agree with the architecture
        ckpt.network()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Self::decode(&fs::read(path)?)
    }
}
