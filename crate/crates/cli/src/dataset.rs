//! On-disk paired-block datasets: one binary block file per model plus a
//! JSON manifest with seeds, provenance and checksums.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mfrnet::degrade::DegradeSpec;
use mfrnet::training::PairOrigin;
use mfrnet::{ModelId, PairSet};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT: &str = "mfrnet-pairs/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRecord {
    /// A clip path, or `synthetic:<index>` for generated frames.
    pub name: String,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetRecord {
    pub model: String,
    pub strength: f64,
    pub seed: u64,
    /// Block file, relative to the manifest.
    pub file: String,
    pub count: usize,
    pub crc32: u32,
    /// Indices into the flattened frame list of `sources`.
    pub origins: Vec<PairOrigin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub seed: u64,
    pub block_size: usize,
    pub sources: Vec<SourceRecord>,
    pub sets: Vec<SetRecord>,
}

fn set_file(id: ModelId) -> String {
    format!("model_{}.pairs", id.number())
}

/// Writes the block files and the manifest.
pub fn write(dir: &Path, seed: u64, sources: Vec<SourceRecord>, sets: &[PairSet; 4]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut records = Vec::with_capacity(4);
    for (id, set) in ModelId::ALL.into_iter().zip(sets) {
        let bytes = set.block_bytes();
        let file = set_file(id);
        std::fs::write(dir.join(&file), &bytes).with_context(|| format!("writing {}", dir.join(&file).display()))?;
        records.push(SetRecord {
            model: id.to_string(),
            strength: set.spec.strength,
            seed: set.seed,
            file,
            count: set.len(),
            crc32: crc32fast::hash(&bytes),
            origins: set.origins(),
        });
    }
    let manifest = DatasetManifest {
        format: FORMAT.to_string(),
        seed,
        block_size: mfrnet::pipeline::BLOCK_SIZE,
        sources,
        sets: records,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = manifest_path(dir);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading dataset manifest {}", path.display()))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing dataset manifest {}", path.display()))?;
    ensure!(
        manifest.format == FORMAT,
        "{}: unsupported dataset format {:?}",
        path.display(),
        manifest.format
    );
    ensure!(
        manifest.block_size == mfrnet::pipeline::BLOCK_SIZE,
        "{}: block size {} is not {}",
        path.display(),
        manifest.block_size,
        mfrnet::pipeline::BLOCK_SIZE
    );
    if manifest.sets.len() != 4 {
        bail!("{}: expected 4 pair sets, found {}", path.display(), manifest.sets.len());
    }
    Ok(manifest)
}

/// Loads and verifies all four pair sets.
pub fn read(dir: &Path) -> Result<(DatasetManifest, [PairSet; 4])> {
    let manifest = read_manifest(dir)?;
    let mut sets = Vec::with_capacity(4);
    for (id, rec) in ModelId::ALL.into_iter().zip(&manifest.sets) {
        ensure!(rec.model == id.to_string(), "set {} is listed as {}", id, rec.model);
        ensure!(
            rec.origins.len() == rec.count,
            "{}: {} origins for {} pairs",
            rec.model,
            rec.origins.len(),
            rec.count
        );
        let path = dir.join(&rec.file);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let crc = crc32fast::hash(&bytes);
        ensure!(
            crc == rec.crc32,
            "{}: checksum {crc:08x} does not match manifest {:08x}",
            path.display(),
            rec.crc32
        );
        let spec = DegradeSpec::new(rec.strength)?;
        let set = PairSet::from_block_bytes(spec, rec.seed, &rec.origins, &bytes)
            .with_context(|| format!("decoding {}", path.display()))?;
        sets.push(set);
    }
    Ok((manifest, sets.try_into().expect("four sets")))
}
