//! Light-source pattern catalog: loading, sampling, and augmentation.
//!
//! A catalog is an immutable, lexicographically ordered set of patterns
//! loaded from a directory of PNG (8/16-bit) and PFM files. Patterns are
//! normalized to linear [0,1] at load time so every consumer sees one value
//! range. Augmentation diversifies a pattern per draw: bilinear resize to
//! the target, an optional random crop-and-rescale, and an optional
//! horizontal flip.

use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::io::{pfm, png, ImageIoError};
use crate::plane::{self, ImagePlane};

/// One light-source pattern in linear [0,1], three channels.
#[derive(Debug, Clone)]
pub struct LightAsset {
    pub id: String,
    pub pixels: ImagePlane,
}

impl LightAsset {
    /// Build an asset from a plane, validating range and channel count.
    pub fn new(id: impl Into<String>, pixels: ImagePlane) -> Result<Self, AssetError> {
        let (h, w, channels) = pixels.dim();
        if h == 0 || w == 0 || channels != 3 {
            return Err(AssetError::InvalidDims {
                what: format!("asset must be non-empty with 3 channels, got {h}x{w}x{channels}"),
            });
        }
        if pixels.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(AssetError::InvalidDims {
                what: "asset values must be finite and in [0,1]".into(),
            });
        }
        Ok(LightAsset {
            id: id.into(),
            pixels,
        })
    }
}

/// Errors from catalog loading and asset augmentation.
#[derive(Debug, Error)]
pub enum AssetError {
    #[error("no decodable light-source files in {dir}")]
    EmptyCatalog { dir: PathBuf },
    #[error("failed to decode asset: {0}")]
    Decode(#[from] ImageIoError),
    #[error("invalid dimensions: {what}")]
    InvalidDims { what: String },
    #[error("cannot read asset directory {dir}: {source}")]
    DirRead {
        dir: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable set of light-source patterns, ordered by file name.
#[derive(Debug, Clone)]
pub struct AssetCatalog {
    assets: Vec<LightAsset>,
    source_dir: PathBuf,
}

impl AssetCatalog {
    /// Load every `*.png` / `*.pfm` file under `dir`, in lexicographic file
    /// name order. A corrupt file aborts the load; other extensions are
    /// ignored.
    pub fn load(dir: &Path) -> Result<Self, AssetError> {
        let entries = std::fs::read_dir(dir).map_err(|source| AssetError::DirRead {
            dir: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && matches!(
                        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase),
                        Some(ref ext) if ext == "png" || ext == "pfm"
                    )
            })
            .collect();
        paths.sort();

        let mut assets = Vec::with_capacity(paths.len());
        for path in &paths {
            let plane = load_asset_plane(path)?;
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            assets.push(LightAsset { id, pixels: plane });
        }
        if assets.is_empty() {
            return Err(AssetError::EmptyCatalog {
                dir: dir.to_path_buf(),
            });
        }
        Ok(AssetCatalog {
            assets,
            source_dir: dir.to_path_buf(),
        })
    }

    /// Build a catalog directly from assets; used by tests and callers that
    /// generate patterns procedurally.
    pub fn from_assets(assets: Vec<LightAsset>) -> Result<Self, AssetError> {
        if assets.is_empty() {
            return Err(AssetError::EmptyCatalog {
                dir: PathBuf::from("<memory>"),
            });
        }
        Ok(AssetCatalog {
            assets,
            source_dir: PathBuf::from("<memory>"),
        })
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn source_dir(&self) -> &Path {
        &self.source_dir
    }

    pub fn assets(&self) -> &[LightAsset] {
        &self.assets
    }
}

fn load_asset_plane(path: &Path) -> Result<ImagePlane, AssetError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let plane = if ext == "pfm" {
        let raw = pfm::read_pfm(path)?;
        let (h, w, channels) = raw.dim();
        let mut rgb = ndarray::Array3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = raw[[y, x, if channels == 1 { 0 } else { c }]];
                    rgb[[y, x, c]] = v.clamp(0.0, 1.0);
                }
            }
        }
        rgb
    } else {
        png::read_rgb(path)?
    };
    Ok(plane)
}

/// Uniformly sample one asset from the catalog.
pub fn sample_asset<'a>(
    catalog: &'a AssetCatalog,
    rng: &mut impl Rng,
) -> Result<&'a LightAsset, AssetError> {
    if catalog.is_empty() {
        return Err(AssetError::EmptyCatalog {
            dir: catalog.source_dir.clone(),
        });
    }
    let index = rng.gen_range(0..catalog.len());
    Ok(&catalog.assets[index])
}

/// Augmentation knobs. Probabilities of zero reduce [`augment_asset`] to a
/// plain bilinear resize.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AugmentOptions {
    /// Probability that a random crop-and-rescale is applied.
    pub crop_probability: f64,
    /// Crop side length as a fraction of the resized pattern.
    pub crop_fraction_range: (f64, f64),
    /// Probability of a horizontal flip.
    pub flip_probability: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            crop_probability: 1.0,
            crop_fraction_range: (0.7, 1.0),
            flip_probability: 0.5,
        }
    }
}

impl AugmentOptions {
    /// All augmentations off: deterministic resize only.
    pub fn disabled() -> Self {
        AugmentOptions {
            crop_probability: 0.0,
            crop_fraction_range: (1.0, 1.0),
            flip_probability: 0.0,
        }
    }
}

/// Resize a pattern to `target` and apply the configured random
/// crop-and-rescale and horizontal flip. Output dims are exactly
/// `(target.0, target.1, 3)` and values stay in [0,1].
pub fn augment_asset(
    asset: &LightAsset,
    target: (usize, usize),
    opts: &AugmentOptions,
    rng: &mut impl Rng,
) -> Result<LightAsset, AssetError> {
    let (target_h, target_w) = target;
    if target_h == 0 || target_w == 0 {
        return Err(AssetError::InvalidDims {
            what: format!("target dims must be >= 1, got {target_h}x{target_w}"),
        });
    }

    let mut pixels = plane::resize_bilinear(&asset.pixels, target_h, target_w);

    if opts.crop_probability > 0.0 && rng.gen_bool(opts.crop_probability.clamp(0.0, 1.0)) {
        let (lo, hi) = opts.crop_fraction_range;
        let fraction = rng.gen_range(lo.min(hi)..=hi.max(lo));
        let crop_h = ((target_h as f64 * fraction).round() as usize).clamp(1, target_h);
        let crop_w = ((target_w as f64 * fraction).round() as usize).clamp(1, target_w);
        let top = rng.gen_range(0..=target_h - crop_h);
        let left = rng.gen_range(0..=target_w - crop_w);
        let window = pixels
            .slice(ndarray::s![top..top + crop_h, left..left + crop_w, ..])
            .to_owned();
        pixels = plane::resize_bilinear(&window, target_h, target_w);
    }

    if opts.flip_probability > 0.0 && rng.gen_bool(opts.flip_probability.clamp(0.0, 1.0)) {
        pixels = plane::flip_horizontal(&pixels);
    }

    Ok(LightAsset {
        id: asset.id.clone(),
        pixels,
    })
}
