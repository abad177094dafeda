//! Physically decoupled sensor noise: photon shot noise, aggregate read
//! noise, per-line offset noise, and quantization noise.
//!
//! All stages operate on linear [0,1] planes. Shot noise is simulated in
//! normalized units as `gain * Poisson(signal / gain)`, which preserves the
//! shot-read contract `Var = gain * signal` without committing to a sensor
//! bit depth. Read noise is zero-mean Gaussian, line noise adds one
//! Gaussian offset per row (or column), quantization noise is uniform on
//! `[-step/2, step/2]`. A parameter of zero disables its stage exactly, so
//! the zero-noise limit is the identity.
//!
//! [`apply_noise`] runs shot -> read -> row -> quant with per-stage child
//! seeds derived from the model seed, then clamps to [0,1]. The unclamped
//! variant exists so the additive mean/variance structure stays observable.

use ndarray::Axis;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plane::ImagePlane;
use crate::seed;

/// Sampled physical noise parameters for one frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Overall system gain in digital units per electron; zero disables
    /// shot noise.
    pub gain: f64,
    /// Read-noise standard deviation in digital units.
    pub read_sigma: f64,
    /// Per-line offset variance in digital units squared.
    pub row_variance: f64,
    /// Quantization step in digital units.
    pub quant_step: f64,
    /// Seed all four stages derive from.
    pub seed: u64,
}

impl NoiseModel {
    /// A model whose every stage is the identity.
    pub fn silent(seed: u64) -> Self {
        NoiseModel {
            gain: 0.0,
            read_sigma: 0.0,
            row_variance: 0.0,
            quant_step: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let fields = [
            ("gain", self.gain),
            ("read_sigma", self.read_sigma),
            ("row_variance", self.row_variance),
            ("quant_step", self.quant_step),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(NoiseError::InvalidConfig {
                    what: format!("{name} must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Sampling ranges for [`sample_noise_model`].
///
/// The gain is log-uniform; the read-noise standard deviation follows a
/// log-linear calibration against the gain with Gaussian scatter:
/// `ln sigma = slope * ln gain + intercept + N(0, scatter^2)`. Line and
/// quantization parameters are plain uniform. A degenerate `(0, 0)` range
/// disables the corresponding stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModelRanges {
    pub gain_range: (f64, f64),
    pub read_slope: f64,
    pub read_intercept: f64,
    pub read_scatter: f64,
    pub row_variance_range: (f64, f64),
    pub quant_step_range: (f64, f64),
}

impl Default for NoiseModelRanges {
    fn default() -> Self {
        NoiseModelRanges {
            gain_range: (0.01, 0.2),
            read_slope: 0.85,
            read_intercept: -1.6,
            read_scatter: 0.25,
            row_variance_range: (1e-6, 4e-4),
            quant_step_range: (1.0 / 255.0, 1.0 / 255.0),
        }
    }
}

impl NoiseModelRanges {
    /// Ranges whose samples are always the identity model.
    pub fn silent() -> Self {
        NoiseModelRanges {
            gain_range: (0.0, 0.0),
            read_slope: 1.0,
            read_intercept: 0.0,
            read_scatter: 0.0,
            row_variance_range: (0.0, 0.0),
            quant_step_range: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let ranges = [
            ("gain_range", self.gain_range),
            ("row_variance_range", self.row_variance_range),
            ("quant_step_range", self.quant_step_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo >= 0.0 && lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(NoiseError::InvalidConfig {
                    what: format!("{name} must satisfy 0 <= min <= max, got ({lo}, {hi})"),
                });
            }
        }
        // a log-uniform range cannot start at zero unless fully disabled
        if self.gain_range.0 == 0.0 && self.gain_range.1 != 0.0 {
            return Err(NoiseError::InvalidConfig {
                what: "gain_range is log-uniform; use (0, 0) to disable or a positive min".into(),
            });
        }
        if !self.read_scatter.is_finite()
            || self.read_scatter < 0.0
            || !self.read_slope.is_finite()
            || !self.read_intercept.is_finite()
        {
            return Err(NoiseError::InvalidConfig {
                what: "read-noise calibration must be finite with scatter >= 0".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise configuration: {what}")]
    InvalidConfig { what: String },
    #[error("signal must be non-negative; found {value} at {index:?}")]
    NegativeSignal { value: f32, index: (usize, usize, usize) },
}

/// Which image axis shares a line-noise offset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineOrientation {
    #[default]
    Row,
    Column,
}

fn unit_draw(rng: &mut impl Rng) -> f64 {
    rng.gen::<f64>()
}

fn log_uniform_or_point(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    let t = unit_draw(rng);
    let (lo, hi) = range;
    if lo == hi {
        lo
    } else {
        (lo.ln() + t * (hi.ln() - lo.ln())).exp()
    }
}

fn uniform_or_point(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    let t = unit_draw(rng);
    let (lo, hi) = range;
    if lo == hi {
        lo
    } else {
        lo + t * (hi - lo)
    }
}

/// Draw a noise model from the ranges. The model's seed is taken from the
/// generator so downstream stages are reproducible from the model alone.
pub fn sample_noise_model(
    ranges: &NoiseModelRanges,
    rng: &mut impl Rng,
) -> Result<NoiseModel, NoiseError> {
    ranges.validate()?;
    let gain = log_uniform_or_point(ranges.gain_range, rng);
    let scatter = {
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        ranges.read_scatter * z
    };
    // sigma = gain^slope * e^intercept * e^scatter keeps point distributions
    // exact: powf(x, 1) == x and exp(0) == 1
    let read_sigma = gain.powf(ranges.read_slope) * ranges.read_intercept.exp() * scatter.exp();
    let row_variance = uniform_or_point(ranges.row_variance_range, rng);
    let quant_step = uniform_or_point(ranges.quant_step_range, rng);
    let seed = rng.gen::<u64>();
    Ok(NoiseModel {
        gain,
        read_sigma,
        row_variance,
        quant_step,
        seed,
    })
}

fn check_non_negative(signal: &ImagePlane) -> Result<(), NoiseError> {
    for ((y, x, c), &v) in signal.indexed_iter() {
        if v.is_nan() || v < 0.0 {
            return Err(NoiseError::NegativeSignal {
                value: v,
                index: (y, x, c),
            });
        }
    }
    Ok(())
}

/// Photon shot noise: `gain * Poisson(signal / gain)` per pixel, so the
/// output keeps the signal's mean and gets variance `gain * signal`.
/// A gain of zero is the noiseless limit and returns the input unchanged.
pub fn apply_shot_noise(
    signal: &ImagePlane,
    gain: f64,
    rng: &mut impl Rng,
) -> Result<ImagePlane, NoiseError> {
    check_non_negative(signal)?;
    if gain == 0.0 {
        return Ok(signal.clone());
    }
    if !gain.is_finite() || gain < 0.0 {
        return Err(NoiseError::InvalidConfig {
            what: format!("gain must be finite and >= 0, got {gain}"),
        });
    }
    let mut out = signal.clone();
    for v in out.iter_mut() {
        let lambda = *v as f64 / gain;
        if lambda > 0.0 {
            let count = Poisson::new(lambda)
                .expect("positive finite lambda")
                .sample(rng);
            *v = (gain * count) as f32;
        }
        // lambda == 0 stays exactly 0
    }
    Ok(out)
}

/// Zero-mean Gaussian read noise, i.i.d. per pixel. Sigma zero is the
/// identity, bit for bit.
pub fn apply_read_noise(signal: &ImagePlane, sigma: f64, rng: &mut impl Rng) -> ImagePlane {
    if sigma == 0.0 {
        return signal.clone();
    }
    let dist = Normal::new(0.0, sigma).expect("finite non-negative sigma");
    let mut out = signal.clone();
    for v in out.iter_mut() {
        *v += dist.sample(rng) as f32;
    }
    out
}

/// One Gaussian offset per line (row or column), shared by every pixel and
/// channel of the line. `variance` parameterizes the offset distribution.
pub fn apply_line_noise(
    signal: &ImagePlane,
    variance: f64,
    orientation: LineOrientation,
    rng: &mut impl Rng,
) -> ImagePlane {
    if variance == 0.0 {
        return signal.clone();
    }
    let dist = Normal::new(0.0, variance.sqrt()).expect("finite non-negative variance");
    let mut out = signal.clone();
    let axis = match orientation {
        LineOrientation::Row => Axis(0),
        LineOrientation::Column => Axis(1),
    };
    for mut line in out.axis_iter_mut(axis) {
        let offset = dist.sample(rng) as f32;
        line.mapv_inplace(|v| v + offset);
    }
    out
}

/// Row-oriented line noise; the common sensor readout pattern.
pub fn apply_row_noise(signal: &ImagePlane, variance: f64, rng: &mut impl Rng) -> ImagePlane {
    apply_line_noise(signal, variance, LineOrientation::Row, rng)
}

/// Quantization noise: uniform on `[-step/2, step/2]` i.i.d. per pixel.
pub fn apply_quant_noise(signal: &ImagePlane, step: f64, rng: &mut impl Rng) -> ImagePlane {
    if step == 0.0 {
        return signal.clone();
    }
    let half = step / 2.0;
    let mut out = signal.clone();
    for v in out.iter_mut() {
        *v += rng.gen_range(-half..=half) as f32;
    }
    out
}

const STAGE_SHOT: u64 = 0;
const STAGE_READ: u64 = 1;
const STAGE_LINE: u64 = 2;
const STAGE_QUANT: u64 = 3;

/// All four stages in order, without the final clamp. Each stage runs on a
/// child seed of `model.seed`, so disabling one stage never shifts the
/// randomness of another.
pub fn apply_noise_unclamped(
    flare_image: &ImagePlane,
    model: &NoiseModel,
    orientation: LineOrientation,
) -> Result<ImagePlane, NoiseError> {
    model.validate()?;
    let mut rng_shot = seed::rng_from(seed::child(model.seed, STAGE_SHOT));
    let mut rng_read = seed::rng_from(seed::child(model.seed, STAGE_READ));
    let mut rng_line = seed::rng_from(seed::child(model.seed, STAGE_LINE));
    let mut rng_quant = seed::rng_from(seed::child(model.seed, STAGE_QUANT));

    let shot = apply_shot_noise(flare_image, model.gain, &mut rng_shot)?;
    let read = apply_read_noise(&shot, model.read_sigma, &mut rng_read);
    let line = apply_line_noise(&read, model.row_variance, orientation, &mut rng_line);
    Ok(apply_quant_noise(&line, model.quant_step, &mut rng_quant))
}

/// Full noise application: shot -> read -> line -> quant, clamped to [0,1].
pub fn apply_noise(flare_image: &ImagePlane, model: &NoiseModel) -> Result<ImagePlane, NoiseError> {
    apply_noise_with_orientation(flare_image, model, LineOrientation::Row)
}

/// [`apply_noise`] with an explicit line-noise orientation.
pub fn apply_noise_with_orientation(
    flare_image: &ImagePlane,
    model: &NoiseModel,
    orientation: LineOrientation,
) -> Result<ImagePlane, NoiseError> {
    let mut out = apply_noise_unclamped(flare_image, model, orientation)?;
    out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Ok(out)
}
