//! End-to-end synthesis: daylight RGB-D in, paired low-light RGB-D out.
//!
//! [`synthesize_pair`] runs one frame through the flare and noise stages
//! under a single per-image seed; [`run_dataset`](batch::run_dataset)
//! drives a whole input manifest in parallel and records everything needed
//! to reproduce each output byte for byte.

mod batch;
mod config;

pub use batch::{
    read_input_manifest, read_manifest, run_dataset, verify_manifest, DriftEntry, InputRecord,
    Manifest, ManifestRecord, OutputFile, RecordFailure, RunOptions, RunOutcome, VerifyReport,
};
pub use config::{PipelineConfig, TRAINING_RESOLUTION_518};

use std::path::PathBuf;

use thiserror::Error;

use crate::assets::{augment_asset, sample_asset, AssetCatalog, AssetError};
use crate::flare::{
    compose_flare, render_source, sample_flare_draw, sample_placements, CameraIntrinsics,
    FlareDraw, FlareError,
};
use crate::fusion::{illumination_guidance, FusionError};
use crate::io::ImageIoError;
use crate::noise::{
    apply_noise_with_orientation, sample_noise_model, NoiseError, NoiseModel,
};
use crate::plane::{self, DepthMap, ImagePlane};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Flare(#[from] FlareError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    ImageIo(#[from] ImageIoError),
    #[error("invalid input manifest: {what}")]
    InvalidManifest { what: String },
    #[error("invalid configuration: {what}")]
    InvalidConfig { what: String },
    #[error("dimensions do not agree: {what}")]
    DimMismatch { what: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} records failed in strict mode")]
    StrictFailure { failed: usize, total: usize },
}

/// One synthesized pair plus everything that produced it.
#[derive(Debug, Clone)]
pub struct NightPair {
    pub source_id: String,
    pub day_rgb: ImagePlane,
    pub night_rgb: ImagePlane,
    pub guidance: Option<ImagePlane>,
    pub depth: DepthMap,
    pub draw: FlareDraw,
    pub noise: NoiseModel,
    pub per_image_seed: u64,
}

// stage indices for per-image child seeds
const STAGE_FLARE_DRAW: u64 = 0;
const STAGE_ASSET: u64 = 1;
const STAGE_AUGMENT: u64 = 2;
const STAGE_PLACEMENT: u64 = 3;
const STAGE_NOISE_MODEL: u64 = 4;

/// Synthesize one low-light pair from a daylight frame.
///
/// Fully deterministic in `(day_rgb, depth, catalog, cfg, per_image_seed)`;
/// the depth buffer passes through untouched unless a resize is configured.
pub fn synthesize_pair(
    source_id: impl Into<String>,
    day_rgb: &ImagePlane,
    depth: &DepthMap,
    catalog: &AssetCatalog,
    cfg: &PipelineConfig,
    per_image_seed: u64,
) -> Result<NightPair, PipelineError> {
    cfg.validate()?;
    let (h0, w0, channels) = day_rgb.dim();
    if channels != 3 {
        return Err(PipelineError::DimMismatch {
            what: format!("day image must have 3 channels, got {channels}"),
        });
    }
    if depth.dim() != (h0, w0) {
        return Err(PipelineError::DimMismatch {
            what: format!("day image is {h0}x{w0}, depth is {:?}", depth.dim()),
        });
    }
    if day_rgb.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(PipelineError::InvalidConfig {
            what: "day image values must be finite and in [0,1]".into(),
        });
    }

    let (day, depth) = match cfg.resolution {
        Some((h, w)) if (h, w) != (h0, w0) => (
            plane::resize_bilinear(day_rgb, h, w),
            plane::resize_nearest_2d(depth, h, w),
        ),
        _ => (day_rgb.clone(), depth.clone()),
    };
    let (h, w, _) = day.dim();
    let intrinsics = cfg
        .intrinsics
        .unwrap_or_else(|| CameraIntrinsics::for_dims(h, w));

    let draw = sample_flare_draw(
        &cfg.flare,
        &mut seed::rng_from(seed::child(per_image_seed, STAGE_FLARE_DRAW)),
    )?;
    let asset = sample_asset(
        catalog,
        &mut seed::rng_from(seed::child(per_image_seed, STAGE_ASSET)),
    )?
    .clone();
    let augmented = augment_asset(
        &asset,
        (h, w),
        &cfg.augment,
        &mut seed::rng_from(seed::child(per_image_seed, STAGE_AUGMENT)),
    )?;
    let placements = sample_placements(
        &cfg.flare,
        &intrinsics,
        (h, w),
        draw.source_count,
        &mut seed::rng_from(seed::child(per_image_seed, STAGE_PLACEMENT)),
    )?;
    let contributions: Vec<ImagePlane> = placements
        .iter()
        .map(|p| {
            render_source(
                &augmented,
                p,
                draw.source_scale,
                (h, w),
                cfg.flare.reference_depth_m,
                cfg.flare.depth_attenuation,
            )
        })
        .collect::<Result<_, _>>()?;
    let flare_image = compose_flare(&day, &contributions, &draw)?;

    let noise_model = sample_noise_model(
        &cfg.noise,
        &mut seed::rng_from(seed::child(per_image_seed, STAGE_NOISE_MODEL)),
    )?;
    let night_rgb = apply_noise_with_orientation(&flare_image, &noise_model, cfg.line_orientation)?;

    let guidance = if cfg.emit_guidance {
        Some(illumination_guidance(&night_rgb)?)
    } else {
        None
    };

    Ok(NightPair {
        source_id: source_id.into(),
        day_rgb: day,
        night_rgb,
        guidance,
        depth,
        draw,
        noise: noise_model,
        per_image_seed,
    })
}
