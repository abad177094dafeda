//! PNG ingestion and 16-bit export.
//!
//! Decoded pixels are normalized to linear [0,1]: 8-bit samples divide by
//! 255, 16-bit by 65535, grayscale replicates to three channels.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use ndarray::Array3;

use super::ImageIoError;
use crate::plane::ImagePlane;

/// Load any supported image file as an `H x W x 3` plane in [0,1].
pub fn read_rgb(path: &Path) -> Result<ImagePlane, ImageIoError> {
    let decoded = image::open(path).map_err(|e| ImageIoError::decode(path, e.to_string()))?;
    let rgb = decoded.to_rgb32f();
    let (width, height) = rgb.dimensions();
    if width == 0 || height == 0 {
        return Err(ImageIoError::decode(path, "zero-sized image"));
    }
    let mut plane = Array3::zeros((height as usize, width as usize, 3));
    for (x, y, pixel) in rgb.enumerate_pixels() {
        for c in 0..3 {
            plane[[y as usize, x as usize, c]] = pixel.0[c].clamp(0.0, 1.0);
        }
    }
    Ok(plane)
}

/// Save an `H x W x 3` plane as a 16-bit RGB PNG; values clamp to [0,1].
pub fn write_rgb16(path: &Path, plane: &ImagePlane) -> Result<(), ImageIoError> {
    let (height, width, channels) = plane.dim();
    if channels != 3 {
        return Err(ImageIoError::layout(
            path,
            format!("{channels} channels, expected 3"),
        ));
    }
    let mut buffer: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::new(width as u32, height as u32);
    for (x, y, pixel) in buffer.enumerate_pixels_mut() {
        for c in 0..3 {
            let v = plane[[y as usize, x as usize, c]].clamp(0.0, 1.0);
            pixel.0[c] = (v * 65535.0 + 0.5) as u16;
        }
    }
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ImageIoError::decode(path, e.to_string()))
}
