use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::{normalize_mesh, sample_tsdf, TriangleMesh, TsdfConfig};
use crate::wavelet::{compact_pair, decompose, reconstruct_from_pair, WaveletPair};

use super::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Settings a prepared dataset was built with. A rerun under different
/// settings recomputes every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSettings {
    pub tsdf: TsdfConfig,
    pub filter: String,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: PathBuf,
    pub source_sha256: String,
    /// File name of the pair, relative to the dataset directory.
    pub pair: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub source: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub settings: DatasetSettings,
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<FailureRecord>,
}

impl DatasetManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        manifest.check_unique()?;
        Ok(manifest)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.check_unique()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.as_ref().join(MANIFEST_FILE), text)?;
        Ok(())
    }

    fn check_unique(&self) -> Result<()> {
        let (mut sources, mut pairs) = (HashSet::new(), HashSet::new());
        for e in &self.entries {
            if !sources.insert(&e.source) || !pairs.insert(&e.pair) {
                return Err(Error::format(format!(
                    "duplicate manifest entry for {}",
                    e.source.display()
                )));
            }
        }
        Ok(())
    }

    /// Reads every pair, checking each file against its recorded hash. The
    /// truncation bound, which `.wvp` files do not store, is restored from
    /// the manifest settings.
    pub fn load_pairs(&self, dir: impl AsRef<Path>) -> Result<Vec<WaveletPair>> {
        let dir = dir.as_ref();
        self.entries
            .iter()
            .map(|e| {
                let path = dir.join(&e.pair);
                let bytes = fs::read(&path)?;
                if sha256_hex(&bytes) != e.sha256 {
                    return Err(Error::format(format!(
                        "{} does not match its manifest hash",
                        path.display()
                    )));
                }
                let mut pair = WaveletPair::decode(&bytes)?;
                if pair.level != self.settings.levels
                    || pair.source.resolution != self.settings.tsdf.resolution
                {
                    return Err(Error::format(format!(
                        "{} disagrees with the manifest settings",
                        path.display()
                    )));
                }
                pair.source = self.settings.tsdf;
                Ok(pair)
            })
            .collect()
    }
}

/// Outcome of [`prepare_dataset`].
#[derive(Debug, Clone)]
pub struct PrepareReport {
    pub manifest: DatasetManifest,
    /// Pairs computed by this run.
    pub computed: usize,
    /// Pairs reused from a previous run.
    pub reused: usize,
}

fn list_objs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in
        fs::read_dir(dir).map_err(|e| Error::invalid_input(format!("{}: {e}", dir.display())))?
    {
        let path = entry?.path();
        let is_obj = path
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("obj"));
        if is_obj && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Mesh → normalized → TSDF → pyramid → `(C^J, D^J)`.
pub fn mesh_to_pair(mesh: &TriangleMesh, cfg: &PipelineConfig) -> Result<WaveletPair> {
    let normalized = normalize_mesh(mesh, cfg.tsdf.extent)?;
    let tsdf = sample_tsdf(&normalized, &cfg.tsdf)?;
    compact_pair(&decompose(&tsdf, &cfg.filter_bank()?, cfg.wavelet.levels)?)
}

/// Deviation between a mesh's TSDF and its reconstruction from the
/// compact pair alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFidelity {
    pub mean_abs: f64,
    pub max_abs: f64,
    pub truncation: f64,
}

pub fn pair_fidelity(mesh: &TriangleMesh, cfg: &PipelineConfig) -> Result<PairFidelity> {
    let fb = cfg.filter_bank()?;
    let tsdf = sample_tsdf(&normalize_mesh(mesh, cfg.tsdf.extent)?, &cfg.tsdf)?;
    let back = reconstruct_from_pair(
        &compact_pair(&decompose(&tsdf, &fb, cfg.wavelet.levels)?)?,
        &fb,
    )?;
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (a, b) in back.values().iter().zip(tsdf.values()) {
        sum += (a - b).abs();
        max = max.max((a - b).abs());
    }
    Ok(PairFidelity {
        mean_abs: sum / tsdf.len() as f64,
        max_abs: max,
        truncation: cfg.tsdf.truncation,
    })
}

fn pair_name(source: &Path, taken: &mut HashSet<PathBuf>) -> PathBuf {
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut name = PathBuf::from(format!("{stem}.wvp"));
    let mut k = 1;
    while !taken.insert(name.clone()) {
        name = PathBuf::from(format!("{stem}-{k}.wvp"));
        k += 1;
    }
    name
}

/// Converts every OBJ in `mesh_dir` into a `.wvp` pair under `out_dir` and
/// writes the manifest. Meshes whose bytes and settings match the previous
/// manifest, and whose pair file is intact, are not recomputed. Unreadable
/// or degenerate meshes are logged and recorded as failures; the call only
/// fails outright when no mesh could be converted.
pub fn prepare_dataset(
    mesh_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
) -> Result<PrepareReport> {
    let (mesh_dir, out_dir) = (mesh_dir.as_ref(), out_dir.as_ref());
    cfg.validate()?;
    let sources = list_objs(mesh_dir)?;
    if sources.is_empty() {
        return Err(Error::invalid_input(format!(
            "no OBJ files in {}",
            mesh_dir.display()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let settings = DatasetSettings {
        tsdf: cfg.tsdf,
        filter: cfg.wavelet.filter.clone(),
        levels: cfg.wavelet.levels,
    };
    let previous: HashMap<PathBuf, ManifestEntry> = match DatasetManifest::load(out_dir) {
        Ok(m) if m.settings == settings => m
            .entries
            .into_iter()
            .map(|e| (e.source.clone(), e))
            .collect(),
        _ => HashMap::new(),
    };

    enum Job {
        Reuse(ManifestEntry),
        Compute {
            source: PathBuf,
            bytes: Vec<u8>,
            pair: PathBuf,
        },
        Fail(FailureRecord),
    }
    let mut taken = HashSet::new();
    let jobs: Vec<Job> = sources
        .into_iter()
        .map(|source| {
            let bytes = match fs::read(&source) {
                Ok(b) => b,
                Err(e) => {
                    return Job::Fail(FailureRecord {
                        source,
                        reason: e.to_string(),
                    })
                }
            };
            let pair = pair_name(&source, &mut taken);
            let hash = sha256_hex(&bytes);
            if let Some(old) = previous.get(&source) {
                let intact =
                    fs::read(out_dir.join(&old.pair)).is_ok_and(|b| sha256_hex(&b) == old.sha256);
                if old.source_sha256 == hash && old.pair == pair && intact {
                    return Job::Reuse(old.clone());
                }
            }
            Job::Compute {
                source,
                bytes,
                pair,
            }
        })
        .collect();

    let reused = jobs.iter().filter(|j| matches!(j, Job::Reuse(_))).count();
    let results: Vec<std::result::Result<ManifestEntry, FailureRecord>> = jobs
        .into_par_iter()
        .map(|job| match job {
            Job::Reuse(e) => Ok(e),
            Job::Fail(f) => Err(f),
            Job::Compute {
                source,
                bytes,
                pair,
            } => {
                let run = || -> Result<ManifestEntry> {
                    let text = String::from_utf8(bytes.clone())
                        .map_err(|_| Error::invalid_input("mesh file is not UTF-8 text"))?;
                    let encoded = mesh_to_pair(&TriangleMesh::parse_obj(&text)?, cfg)?.encode();
                    fs::write(out_dir.join(&pair), &encoded)?;
                    Ok(ManifestEntry {
                        source: source.clone(),
                        source_sha256: sha256_hex(&bytes),
                        pair: pair.clone(),
                        sha256: sha256_hex(&encoded),
                    })
                };
                run().map_err(|e| FailureRecord {
                    source: source.clone(),
                    reason: e.to_string(),
                })
            }
        })
        .collect();

    let mut manifest = DatasetManifest {
        settings,
        entries: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok(e) => manifest.entries.push(e),
            Err(f) => {
                warn!("skipping {}: {}", f.source.display(), f.reason);
                manifest.failures.push(f);
            }
        }
    }
    manifest.save(out_dir)?;
    let computed = manifest.entries.len() - reused;
    info!(
        "dataset: {} pairs ({computed} computed, {reused} reused), {} failures",
        manifest.entries.len(),
        manifest.failures.len()
    );
    if manifest.entries.is_empty() {
        return Err(Error::invalid_input(format!(
            "no readable mesh in {}",
            mesh_dir.display()
        )));
    }
    Ok(PrepareReport {
        manifest,
        computed,
        reused,
    })
}
