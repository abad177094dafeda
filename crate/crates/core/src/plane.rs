//! Image plane and depth map carriers plus the resampling helpers shared by
//! the asset and flare stages.
//!
//! An [`ImagePlane`] is an `H x W x C` array of 32-bit linear-light
//! intensities; a [`DepthMap`] is an `H x W` array of meters. Validity of
//! depth values is decided by the consumer (see [`crate::depth`]).

use ndarray::{Array2, Array3};

/// `H x W x C` linear-light intensity plane.
pub type ImagePlane = Array3<f32>;

/// `H x W` depth in meters.
pub type DepthMap = Array2<f32>;

/// Mean over every element of a plane, accumulated in f64.
pub fn mean_value(plane: &ImagePlane) -> f64 {
    if plane.is_empty() {
        return 0.0;
    }
    let sum: f64 = plane.iter().map(|&v| v as f64).sum();
    sum / plane.len() as f64
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // a + t*(b-a) keeps constants bit-exact and stays inside [min(a,b), max(a,b)]
    a + t * (b - a)
}

/// Bilinear resize with pixel-center alignment.
///
/// Sampling a constant plane reproduces the constant bit-exactly, and output
/// values never leave the range spanned by the input.
pub fn resize_bilinear(src: &ImagePlane, out_h: usize, out_w: usize) -> ImagePlane {
    let (in_h, in_w, channels) = src.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0);
    let mut out = Array3::zeros((out_h, out_w, channels));

    let scale_y = in_h as f32 / out_h as f32;
    let scale_x = in_w as f32 / out_w as f32;

    for oy in 0..out_h {
        let sy = ((oy as f32 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f32);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = sy - y0 as f32;
        for ox in 0..out_w {
            let sx = ((ox as f32 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f32);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = sx - x0 as f32;
            for c in 0..channels {
                let top = lerp(src[[y0, x0, c]], src[[y0, x1, c]], tx);
                let bottom = lerp(src[[y1, x0, c]], src[[y1, x1, c]], tx);
                out[[oy, ox, c]] = lerp(top, bottom, ty);
            }
        }
    }
    out
}

/// Nearest-neighbor resize for a 2D map; used for depth so no interpolated
/// pseudo-depths appear along object boundaries.
pub fn resize_nearest_2d(src: &DepthMap, out_h: usize, out_w: usize) -> DepthMap {
    let (in_h, in_w) = src.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0);
    let mut out = Array2::zeros((out_h, out_w));
    let scale_y = in_h as f32 / out_h as f32;
    let scale_x = in_w as f32 / out_w as f32;
    for oy in 0..out_h {
        let sy = (((oy as f32 + 0.5) * scale_y - 0.5).round().max(0.0) as usize).min(in_h - 1);
        for ox in 0..out_w {
            let sx = (((ox as f32 + 0.5) * scale_x - 0.5).round().max(0.0) as usize).min(in_w - 1);
            out[[oy, ox]] = src[[sy, sx]];
        }
    }
    out
}

/// Mirror a plane left-to-right.
pub fn flip_horizontal(src: &ImagePlane) -> ImagePlane {
    let (h, w, channels) = src.dim();
    let mut out = Array3::zeros((h, w, channels));
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                out[[y, x, c]] = src[[y, w - 1 - x, c]];
            }
        }
    }
    out
}
