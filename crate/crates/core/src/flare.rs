//! Flare stage: 3D light placement, intensity sampling, and gamma-domain
//! compositing of light-source patterns onto a darkened base image.
//!
//! A frame draws a brightness scale, a gamma exponent, a per-source
//! intensity scale and a total intensity budget; the budget divided by the
//! per-source scale fixes how many sources are placed. Each source is
//! rendered from one augmented pattern, shifted to its image position and
//! spatially scaled by perspective, then everything is summed in the gamma
//! domain and clamped to [0,1].

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::LightAsset;
use crate::plane::{self, ImagePlane};

/// Hard cap on light-source depth in meters.
pub const MAX_LIGHT_DEPTH_M: f64 = 20.0;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, FlareError> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(FlareError::InvalidConfig {
                what: format!("focal lengths must be positive, got fx={fx}, fy={fy}"),
            });
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// Generic default for an `h x w` frame: focal length of the longer
    /// side, principal point at the center.
    pub fn for_dims(height: usize, width: usize) -> Self {
        let f = height.max(width) as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Project a 3D point back to image coordinates.
    pub fn project(&self, point: [f64; 3]) -> (f64, f64) {
        (
            self.fx * point[0] / point[2] + self.cx,
            self.fy * point[1] / point[2] + self.cy,
        )
    }
}

/// A light source placed in the scene: image position, depth, and the
/// back-projected 3D point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LightPlacement {
    /// Image-plane coordinates in pixels.
    pub u: f64,
    pub v: f64,
    /// Depth along the optical axis in meters.
    pub depth_m: f64,
    /// 3D position `depth * K^-1 (u, v, 1)`.
    pub position: [f64; 3],
}

/// Per-frame flare draw: every random scalar the compositor consumes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlareDraw {
    /// Base-image darkening factor.
    pub brightness_scale: f64,
    /// Gamma exponent applied to base and sources before summation.
    pub gamma: f64,
    /// Total peak-intensity budget across all sources.
    pub total_intensity: f64,
    /// Per-source intensity scale.
    pub source_scale: f64,
    /// Number of sources: budget / per-source scale, rounded, at least 1.
    pub source_count: u32,
}

/// Sampling ranges for [`sample_flare_draw`] and placement generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlareConfig {
    /// Log-uniform range for the per-source intensity scale.
    pub source_scale_range: (f64, f64),
    /// Log-uniform range for the total intensity budget.
    pub intensity_range: (f64, f64),
    /// Uniform range for the base darkening factor.
    pub brightness_scale_range: (f64, f64),
    /// Uniform range for the gamma exponent.
    pub gamma_range: (f64, f64),
    /// Depth cap for sampled placements; must not exceed
    /// [`MAX_LIGHT_DEPTH_M`].
    pub max_light_depth_m: f64,
    /// Depth at which a pattern renders at its native size.
    pub reference_depth_m: f64,
    /// Attenuate source intensity by the inverse square of depth.
    pub depth_attenuation: bool,
}

impl Default for FlareConfig {
    fn default() -> Self {
        FlareConfig {
            source_scale_range: (0.5, 4.0),
            intensity_range: (1.0, 12.0),
            brightness_scale_range: (0.4, 1.0),
            gamma_range: (1.8, 2.2),
            max_light_depth_m: MAX_LIGHT_DEPTH_M,
            reference_depth_m: 5.0,
            depth_attenuation: false,
        }
    }
}

impl FlareConfig {
    pub fn validate(&self) -> Result<(), FlareError> {
        let ranges = [
            ("source_scale_range", self.source_scale_range),
            ("intensity_range", self.intensity_range),
            ("brightness_scale_range", self.brightness_scale_range),
            ("gamma_range", self.gamma_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(FlareError::InvalidConfig {
                    what: format!("{name} must satisfy 0 < min <= max, got ({lo}, {hi})"),
                });
            }
        }
        if !(self.max_light_depth_m > 0.0 && self.max_light_depth_m <= MAX_LIGHT_DEPTH_M) {
            return Err(FlareError::InvalidConfig {
                what: format!(
                    "max_light_depth_m must be in (0, {MAX_LIGHT_DEPTH_M}], got {}",
                    self.max_light_depth_m
                ),
            });
        }
        if !self.reference_depth_m.is_finite() || self.reference_depth_m <= 0.0 {
            return Err(FlareError::InvalidConfig {
                what: format!("reference_depth_m must be > 0, got {}", self.reference_depth_m),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FlareError {
    #[error("light depth {depth_m} m outside (0, {MAX_LIGHT_DEPTH_M}]")]
    DepthOutOfRange { depth_m: f64 },
    #[error("invalid flare configuration: {what}")]
    InvalidConfig { what: String },
    #[error("plane dimensions do not agree: {what}")]
    DimMismatch { what: String },
    #[error("invalid dimensions: {what}")]
    InvalidDims { what: String },
}

/// Back-project an image position at depth `depth_m` into the scene.
pub fn place_light(
    intrinsics: &CameraIntrinsics,
    uv: (f64, f64),
    depth_m: f64,
) -> Result<LightPlacement, FlareError> {
    if !(depth_m > 0.0 && depth_m <= MAX_LIGHT_DEPTH_M) || !depth_m.is_finite() {
        return Err(FlareError::DepthOutOfRange { depth_m });
    }
    let (u, v) = uv;
    let position = [
        depth_m * (u - intrinsics.cx) / intrinsics.fx,
        depth_m * (v - intrinsics.cy) / intrinsics.fy,
        depth_m,
    ];
    Ok(LightPlacement {
        u,
        v,
        depth_m,
        position,
    })
}

/// Sample from `exp(U(ln lo, ln hi))`; a degenerate range returns `lo`
/// exactly. Always consumes one draw so streams stay aligned.
fn log_uniform(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    let (lo, hi) = range;
    let t: f64 = rng.gen_range(lo.ln()..=hi.ln());
    if lo == hi {
        lo
    } else {
        t.exp()
    }
}

fn uniform(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    rng.gen_range(range.0..=range.1)
}

/// Number of sources for a budget and per-source scale: round to nearest,
/// never below one.
pub fn source_count(total_intensity: f64, source_scale: f64) -> u32 {
    let n = (total_intensity / source_scale + 0.5).floor();
    if n < 1.0 {
        1
    } else {
        n as u32
    }
}

/// Draw the per-frame flare scalars.
pub fn sample_flare_draw(cfg: &FlareConfig, rng: &mut impl Rng) -> Result<FlareDraw, FlareError> {
    cfg.validate()?;
    let source_scale = log_uniform(cfg.source_scale_range, rng);
    let total_intensity = log_uniform(cfg.intensity_range, rng);
    let brightness_scale = uniform(cfg.brightness_scale_range, rng);
    let gamma = uniform(cfg.gamma_range, rng);
    Ok(FlareDraw {
        brightness_scale,
        gamma,
        total_intensity,
        source_scale,
        source_count: source_count(total_intensity, source_scale),
    })
}

/// Sample `count` placements: image position uniform over the frame, depth
/// uniform over [1, max depth].
pub fn sample_placements(
    cfg: &FlareConfig,
    intrinsics: &CameraIntrinsics,
    dims: (usize, usize),
    count: u32,
    rng: &mut impl Rng,
) -> Result<Vec<LightPlacement>, FlareError> {
    let (h, w) = dims;
    let mut placements = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let u = rng.gen_range(0.0..w as f64);
        let v = rng.gen_range(0.0..h as f64);
        let z = rng.gen_range(1.0..=cfg.max_light_depth_m.min(MAX_LIGHT_DEPTH_M));
        placements.push(place_light(intrinsics, (u, v), z)?);
    }
    Ok(placements)
}

/// Render one source's contribution plane.
///
/// The pattern is intensity-scaled by `source_scale`, spatially scaled by
/// `reference_depth / depth` (perspective shrink), centered at the
/// placement's image position with out-of-frame parts cropped; everything
/// outside the pattern is zero. With `depth_attenuation` the intensity is
/// additionally divided by `(depth / reference_depth)^2`.
pub fn render_source(
    asset: &LightAsset,
    placement: &LightPlacement,
    source_scale: f64,
    dims: (usize, usize),
    reference_depth_m: f64,
    depth_attenuation: bool,
) -> Result<ImagePlane, FlareError> {
    let (frame_h, frame_w) = dims;
    if frame_h == 0 || frame_w == 0 {
        return Err(FlareError::InvalidDims {
            what: "frame dims must be >= 1".into(),
        });
    }
    if !reference_depth_m.is_finite() || reference_depth_m <= 0.0 {
        return Err(FlareError::InvalidDims {
            what: format!("reference depth must be > 0, got {reference_depth_m}"),
        });
    }

    let spatial = reference_depth_m / placement.depth_m;
    let (asset_h, asset_w, _) = asset.pixels.dim();
    let scaled_h = ((asset_h as f64 * spatial).round() as usize).max(1);
    let scaled_w = ((asset_w as f64 * spatial).round() as usize).max(1);
    let scaled = if (scaled_h, scaled_w) == (asset_h, asset_w) {
        asset.pixels.clone()
    } else {
        plane::resize_bilinear(&asset.pixels, scaled_h, scaled_w)
    };

    let mut intensity = source_scale;
    if depth_attenuation {
        let ratio = placement.depth_m / reference_depth_m;
        intensity /= ratio * ratio;
    }
    let intensity = intensity as f32;

    let top = placement.v.round() as i64 - (scaled_h as i64) / 2;
    let left = placement.u.round() as i64 - (scaled_w as i64) / 2;

    let mut out = Array3::zeros((frame_h, frame_w, 3));
    for sy in 0..scaled_h {
        let fy = top + sy as i64;
        if fy < 0 || fy >= frame_h as i64 {
            continue;
        }
        for sx in 0..scaled_w {
            let fx = left + sx as i64;
            if fx < 0 || fx >= frame_w as i64 {
                continue;
            }
            for c in 0..3 {
                out[[fy as usize, fx as usize, c]] = intensity * scaled[[sy, sx, c]];
            }
        }
    }
    Ok(out)
}

/// Gamma-domain composition of the darkened base image and the source
/// contributions, clamped to [0,1].
///
/// A gamma of exactly 1 takes the linear path so an identity draw
/// (brightness 1, gamma 1, zero contributions) reproduces the input
/// bit-exactly.
pub fn compose_flare(
    base: &ImagePlane,
    contributions: &[ImagePlane],
    draw: &FlareDraw,
) -> Result<ImagePlane, FlareError> {
    if contributions.len() != draw.source_count as usize {
        return Err(FlareError::DimMismatch {
            what: format!(
                "{} contributions for a draw of {} sources",
                contributions.len(),
                draw.source_count
            ),
        });
    }
    for (i, c) in contributions.iter().enumerate() {
        if c.dim() != base.dim() {
            return Err(FlareError::DimMismatch {
                what: format!(
                    "contribution {i} is {:?}, base is {:?}",
                    c.dim(),
                    base.dim()
                ),
            });
        }
    }

    let brightness = draw.brightness_scale as f32;
    let gamma = draw.gamma as f32;
    let apply_gamma = |v: f32| -> f32 {
        if gamma == 1.0 {
            v
        } else if v == 0.0 {
            0.0
        } else {
            v.powf(gamma)
        }
    };

    let mut out = base.mapv(|v| apply_gamma(brightness * v));
    for contribution in contributions {
        ndarray::Zip::from(&mut out)
            .and(contribution)
            .for_each(|o, &c| *o += apply_gamma(c));
    }
    out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(out)
}
