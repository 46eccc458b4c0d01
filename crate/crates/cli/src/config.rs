//! The JSON run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mfrnet::training::{derive_seed, DEFAULT_STRENGTHS};
use mfrnet::video::RawFormat;
use mfrnet::{ChromaFormat, NetworkConfig, TrainingConfig};
use serde::{Deserialize, Serialize};

/// Named network sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// F=64, g=32, D=64.
    Paper,
    /// F=8, g=4, D=8.
    Tiny,
}

impl Profile {
    pub fn config(self) -> NetworkConfig {
        match self {
            Profile::Paper => NetworkConfig::paper_scale(),
            Profile::Tiny => NetworkConfig::tiny(),
        }
    }
}

/// Either a profile name or explicit widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkChoice {
    Profile(Profile),
    Explicit(NetworkConfig),
}

impl Default for NetworkChoice {
    fn default() -> Self {
        NetworkChoice::Profile(Profile::Paper)
    }
}

impl NetworkChoice {
    pub fn config(&self) -> NetworkConfig {
        match self {
            NetworkChoice::Profile(p) => p.config(),
            NetworkChoice::Explicit(c) => *c,
        }
    }
}

/// Raw video geometry. Y4M files carry their own and ignore it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoConfig {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub bit_depth: Option<u8>,
    pub chroma: Option<ChromaFormat>,
    /// Expected number of frames; when set, the input size must match exactly.
    pub frames: Option<usize>,
}

impl VideoConfig {
    /// Fields of `over` replace those of `self`.
    pub fn merged(&self, over: &VideoConfig) -> VideoConfig {
        VideoConfig {
            width: over.width.or(self.width),
            height: over.height.or(self.height),
            bit_depth: over.bit_depth.or(self.bit_depth),
            chroma: over.chroma.or(self.chroma),
            frames: over.frames.or(self.frames),
        }
    }

    /// The raw format, if width and height are known. Bit depth defaults to 8
    /// and chroma to 4:2:0.
    pub fn raw_format(&self) -> Result<Option<RawFormat>> {
        let (Some(width), Some(height)) = (self.width, self.height) else {
            if self.width.is_some() || self.height.is_some() {
                bail!("raw video needs both width and height");
            }
            return Ok(None);
        };
        let fmt = RawFormat {
            width,
            height,
            bit_depth: self.bit_depth.unwrap_or(8),
            chroma: self.chroma.unwrap_or(ChromaFormat::Yuv420),
        };
        fmt.validate()?;
        Ok(Some(fmt))
    }
}

/// One source clip for dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
    #[serde(default)]
    pub bit_depth: Option<u8>,
    #[serde(default)]
    pub chroma: Option<ChromaFormat>,
    /// Use at most this many frames of the clip.
    #[serde(default)]
    pub frames: Option<usize>,
}

impl SourceConfig {
    pub fn video(&self) -> VideoConfig {
        VideoConfig {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            chroma: self.chroma,
            frames: None,
        }
    }
}

/// Generated source frames, used when no clips are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            width: 256,
            height: 192,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub dir: PathBuf,
    pub pairs_per_model: usize,
    pub sources: Vec<SourceConfig>,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("dataset"),
            pairs_per_model: 256,
            sources: Vec::new(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The only source of randomness; see [`RunConfig::stream_seed`].
    pub seed: u64,
    pub network: NetworkChoice,
    pub training: TrainingConfig,
    /// Degradation strengths for Model_1..Model_4, strictly increasing.
    pub strengths: [f64; 4],
    pub dataset: DatasetConfig,
    pub weights_dir: PathBuf,
    pub video: VideoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            network: NetworkChoice::default(),
            training: TrainingConfig::default(),
            strengths: DEFAULT_STRENGTHS,
            dataset: DatasetConfig::default(),
            weights_dir: PathBuf::from("weights"),
            video: VideoConfig::default(),
        }
    }
}

/// Seed streams derived from the run seed.
pub const SEED_SYNTHETIC: u64 = 1;
pub const SEED_DATASET: u64 = 2;
pub const SEED_TRAINING: u64 = 3;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.config().validate()?;
        self.training.validate()?;
        if self.strengths.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            bail!("strengths must be positive, got {:?}", self.strengths);
        }
        if self.strengths.windows(2).any(|w| w[1] <= w[0]) {
            bail!("strengths must be strictly increasing, got {:?}", self.strengths);
        }
        let syn = &self.dataset.synthetic;
        if self.dataset.sources.is_empty() && syn.frames > 0 && (syn.width < 96 || syn.height < 96) {
            bail!("synthetic frames must be at least 96x96, got {}x{}", syn.width, syn.height);
        }
        Ok(())
    }

    /// `derive_seed(seed, stream)`: synthetic frames use stream 1, datasets
    /// stream 2 and training stream 3.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    /// The training configuration with its seed derived from the run seed.
    pub fn seeded_training(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.stream_seed(SEED_TRAINING),
            ..self.training.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"seed": 4, "network": "tiny", "training": {"epochs": 3}, "video": {"chroma": "444"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.network.config(), NetworkConfig::tiny());
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.batch_size, 16);
        assert_eq!(cfg.video.chroma, Some(ChromaFormat::Yuv444));
        let explicit: RunConfig = serde_json::from_str(
            r#"{"network": {"base_channels": 12, "growth": 6, "side_channels": 10}}"#,
        )
        .unwrap();
        assert_eq!(explicit.network.config().base_channels, 12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            r#"{"sede": 1}"#,
            r#"{"training": {"epoch": 3}}"#,
            r#"{"training": {"seed": 3}}"#,
            r#"{"dataset": {"synthetic": {"count": 3}}}"#,
            r#"{"video": {"depth": 10}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn rejects_unordered_strengths() {
        let cfg = RunConfig {
            strengths: [4.0, 16.0, 8.0, 32.0],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
