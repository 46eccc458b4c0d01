//! Binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "MFRNETW1"
//! 8       4     format version (u32, currently 1)
//! 12      4     manifest length M (u32)
//! 16      M     manifest: JSON {"config": ..., "params": [{"name", "shape"}, ...]}
//! 16+M    4·P   parameters as f32, in manifest order
//! end-4   4     CRC-32 of bytes [12, end-4)
//! ```
//!
//! Each layer contributes a `<layer>.weight` and a `<layer>.bias` entry.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{MfrNet, NetworkConfig};
use crate::tensor::{ConvParams, Tensor};

pub const MAGIC: &[u8; 8] = b"MFRNETW1";
pub const VERSION: u32 = 1;
/// Magic, version and manifest length.
pub const HEADER_BYTES: usize = 16;
pub const CHECKSUM_BYTES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: NetworkConfig,
    pub params: Vec<ParamEntry>,
}

impl Manifest {
    /// The manifest every model with `config` must have.
    pub fn for_config(config: &NetworkConfig) -> Result<Self> {
        let model = MfrNet::<f32>::zeros(*config)?;
        Ok(Self::for_model(&model))
    }

    fn for_model(model: &MfrNet<f32>) -> Self {
        let params = model
            .specs()
            .iter()
            .flat_map(|s| {
                [
                    ParamEntry {
                        name: format!("{}.weight", s.name),
                        shape: vec![s.out_channels, s.in_channels, s.kernel, s.kernel],
                    },
                    ParamEntry {
                        name: format!("{}.bias", s.name),
                        shape: vec![s.out_channels],
                    },
                ]
            })
            .collect();
        Self {
            config: *model.config(),
            params,
        }
    }

    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }
}

/// Serializes a model.
pub fn to_bytes(model: &MfrNet<f32>) -> Result<Vec<u8>> {
    let manifest = serde_json::to_vec(&Manifest::for_model(model))?;
    let values = model.param_count();
    let mut out = Vec::with_capacity(HEADER_BYTES + manifest.len() + 4 * values + CHECKSUM_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let len = u32::try_from(manifest.len()).map_err(|_| Error::WeightFormat("manifest too large".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&manifest);
    for layer in model.layers() {
        for v in layer.weight.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[12..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses and validates a serialized model.
pub fn from_bytes(bytes: &[u8]) -> Result<MfrNet<f32>> {
    if bytes.len() < HEADER_BYTES + CHECKSUM_BYTES {
        return Err(Error::WeightFormat(format!("truncated: {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::WeightFormat("bad magic (not an MFRNet weight file)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::WeightFormat(format!("unsupported version {version} (expected {VERSION})")));
    }
    let body_end = bytes.len() - CHECKSUM_BYTES;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[12..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let manifest_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let data_start = HEADER_BYTES
        .checked_add(manifest_len)
        .filter(|&e| e <= body_end)
        .ok_or_else(|| Error::WeightFormat(format!("manifest length {manifest_len} overruns file")))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_BYTES..data_start])
        .map_err(|e| Error::WeightFormat(format!("manifest: {e}")))?;
    let expected = Manifest::for_config(&manifest.config)?;
    if manifest.params != expected.params {
        let first = manifest
            .params
            .iter()
            .zip(&expected.params)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("{} {:?} where {} {:?} was expected", a.name, a.shape, b.name, b.shape))
            .unwrap_or_else(|| format!("{} entries, expected {}", manifest.params.len(), expected.params.len()));
        return Err(Error::WeightFormat(format!("parameter manifest does not match config: {first}")));
    }
    let data = &bytes[data_start..body_end];
    let count = expected.element_count();
    if data.len() != 4 * count {
        return Err(Error::WeightFormat(format!(
            "expected {} parameter bytes, found {}",
            4 * count,
            data.len()
        )));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let model = MfrNet::<f32>::zeros(manifest.config)?;
    let layers = model
        .layers()
        .iter()
        .map(|l| {
            let weight: Vec<f32> = values.by_ref().take(l.weight.len()).collect();
            let bias: Vec<f32> = values.by_ref().take(l.bias.len()).collect();
            ConvParams::new(Tensor::from_vec(l.weight.shape(), weight)?, bias)
        })
        .collect::<Result<Vec<_>>>()?;
    MfrNet::from_layers(manifest.config, layers)
}

pub fn save(model: &MfrNet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MfrNet<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// The CRC stored in a serialized file.
pub fn stored_checksum(bytes: &[u8]) -> Option<u32> {
    let tail = bytes.len().checked_sub(CHECKSUM_BYTES)?;
    Some(u32::from_le_bytes(bytes[tail..].try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = MfrNet::<f32>::init(NetworkConfig::tiny(), 5).unwrap();
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn file_size_matches_parameter_count() {
        let cfg = NetworkConfig::tiny();
        let m = MfrNet::<f32>::zeros(cfg).unwrap();
        let bytes = to_bytes(&m).unwrap();
        let manifest_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), HEADER_BYTES + manifest_len + 4 * cfg.param_count() + CHECKSUM_BYTES);
    }

    #[test]
    fn every_single_byte_corruption_is_caught() {
        let m = MfrNet::<f32>::init(NetworkConfig::tiny(), 1).unwrap();
        let bytes = to_bytes(&m).unwrap();
        // Every byte of the header and manifest, then a stride through the data.
        let manifest_end = HEADER_BYTES + u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let positions = (0..manifest_end).chain((manifest_end..bytes.len()).step_by(997)).chain([bytes.len() - 1]);
        for i in positions {
            let mut bad = bytes.clone();
            bad[i] ^= 0x20;
            assert!(from_bytes(&bad).is_err(), "corruption at byte {i} went unnoticed");
        }
    }

    #[test]
    fn rejects_truncation_and_wrong_magic() {
        let m = MfrNet::<f32>::zeros(NetworkConfig::tiny()).unwrap();
        let bytes = to_bytes(&m).unwrap();
        assert!(matches!(from_bytes(&bytes[..10]), Err(Error::WeightFormat(_))));
        assert!(from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes;
        bad[8] = 2;
        assert!(from_bytes(&bad).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn rejects_manifest_that_disagrees_with_config() {
        let m = MfrNet::<f32>::zeros(NetworkConfig::tiny()).unwrap();
        let mut manifest = Manifest::for_model(&m);
        manifest.params[0].shape = vec![8, 3, 1, 1];
        let json = serde_json::to_vec(&manifest).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        bytes.extend(std::iter::repeat_n(0u8, 4 * m.param_count()));
        let crc = crc32fast::hash(&bytes[12..]);
        bytes.extend_from_slice(&crc.to_le_bytes());
        let err = from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("sf.weight"), "{err}");
    }
}
