//! Pipeline configuration: a TOML-mirrored struct covering every stage.
//!
//! Every field has a default, so a config file only states what it changes.
//! `asset_dir`, `output_dir`, and `global_seed` may be given in the file or
//! supplied by the caller (the CLI overrides the file). The configuration
//! digest pins the exact effective settings into output manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::AugmentOptions;
use crate::flare::{CameraIntrinsics, FlareConfig};
use crate::noise::{LineOrientation, NoiseModelRanges};
use crate::pipeline::PipelineError;

/// Input resize preset matching the common square training resolution.
pub const TRAINING_RESOLUTION_518: (usize, usize) = (518, 518);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub flare: FlareConfig,
    pub noise: NoiseModelRanges,
    pub augment: AugmentOptions,
    /// Directory of light-source patterns.
    pub asset_dir: PathBuf,
    /// Directory synthesized outputs are written to.
    pub output_dir: PathBuf,
    /// Seed every per-record seed derives from.
    pub global_seed: u64,
    /// Optional `(height, width)` resize applied to inputs before
    /// synthesis; `None` preserves native resolution.
    pub resolution: Option<(usize, usize)>,
    /// Also write the grayscale guidance plane per record.
    pub emit_guidance: bool,
    /// Axis sharing one line-noise offset.
    pub line_orientation: LineOrientation,
    /// Camera intrinsics; derived from the frame size when absent.
    pub intrinsics: Option<CameraIntrinsics>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            flare: FlareConfig::default(),
            noise: NoiseModelRanges::default(),
            augment: AugmentOptions::default(),
            asset_dir: PathBuf::new(),
            output_dir: PathBuf::new(),
            global_seed: 0,
            resolution: None,
            emit_guidance: false,
            line_orientation: LineOrientation::Row,
            intrinsics: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::InvalidConfig {
            what: e.to_string(),
        })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.flare.validate().map_err(PipelineError::from)?;
        self.noise.validate().map_err(PipelineError::from)?;
        let a = &self.augment;
        if !(0.0..=1.0).contains(&a.crop_probability)
            || !(0.0..=1.0).contains(&a.flip_probability)
            || !(a.crop_fraction_range.0 > 0.0
                && a.crop_fraction_range.0 <= a.crop_fraction_range.1
                && a.crop_fraction_range.1 <= 1.0)
        {
            return Err(PipelineError::InvalidConfig {
                what: "augment probabilities must be in [0,1] and crop fractions in (0,1]".into(),
            });
        }
        if let Some((h, w)) = self.resolution {
            if h == 0 || w == 0 {
                return Err(PipelineError::InvalidConfig {
                    what: format!("resolution must be >= 1, got ({h}, {w})"),
                });
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&body);
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        write!(out, "{b:02x}").expect("hex write");
    }
    out
}
