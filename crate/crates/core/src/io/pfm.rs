//! Portable float map reader/writer.
//!
//! Layout written by this crate: `PF` (3 channels) or `Pf` (1 channel)
//! header, `width height` line, scale line `-1.0` (negative = little
//! endian), then rows bottom-to-top, pixels left-to-right, channels
//! interleaved, 4-byte IEEE 754 floats. The reader accepts either
//! endianness via the scale sign.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use super::ImageIoError;
use crate::plane::ImagePlane;

fn read_header_line(
    reader: &mut impl BufRead,
    path: &Path,
) -> Result<String, ImageIoError> {
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| ImageIoError::io(path, e))?;
    if line.is_empty() {
        return Err(ImageIoError::decode(path, "truncated header"));
    }
    Ok(line.trim().to_string())
}

/// Read a PFM file into an `H x W x C` plane with C of 1 or 3.
pub fn read_pfm(path: &Path) -> Result<ImagePlane, ImageIoError> {
    let file = File::open(path).map_err(|e| ImageIoError::io(path, e))?;
    let mut reader = BufReader::new(file);

    let magic = read_header_line(&mut reader, path)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(ImageIoError::decode(
                path,
                format!("bad magic {other:?}, expected PF or Pf"),
            ))
        }
    };

    let dims = read_header_line(&mut reader, path)?;
    let mut parts = dims.split_whitespace();
    let width: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageIoError::decode(path, "bad width"))?;
    let height: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageIoError::decode(path, "bad height"))?;
    if width == 0 || height == 0 {
        return Err(ImageIoError::decode(path, "zero-sized image"));
    }

    let scale: f32 = read_header_line(&mut reader, path)?
        .parse()
        .map_err(|_| ImageIoError::decode(path, "bad scale line"))?;
    let little_endian = scale < 0.0;

    let count = width * height * channels;
    let mut raw = vec![0u8; count * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|e| ImageIoError::io(path, e))?;

    let mut plane = Array3::zeros((height, width, channels));
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let c = i % channels;
        let x = (i / channels) % width;
        // rows are stored bottom-up
        let y_file = i / (channels * width);
        let y = height - 1 - y_file;
        plane[[y, x, c]] = value;
    }
    Ok(plane)
}

/// Write an `H x W x C` plane (C of 1 or 3) as little-endian PFM.
pub fn write_pfm(path: &Path, plane: &ImagePlane) -> Result<(), ImageIoError> {
    let (height, width, channels) = plane.dim();
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        other => {
            return Err(ImageIoError::layout(
                path,
                format!("{other} channels, expected 1 or 3"),
            ))
        }
    };
    let file = File::create(path).map_err(|e| ImageIoError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write!(writer, "{magic}\n{width} {height}\n-1.0\n")
        .map_err(|e| ImageIoError::io(path, e))?;
    for y_file in 0..height {
        let y = height - 1 - y_file;
        for x in 0..width {
            for c in 0..channels {
                writer
                    .write_all(&plane[[y, x, c]].to_le_bytes())
                    .map_err(|e| ImageIoError::io(path, e))?;
            }
        }
    }
    writer.flush().map_err(|e| ImageIoError::io(path, e))
}

/// Read a single-channel PFM as a depth map.
pub fn read_pfm_depth(path: &Path) -> Result<crate::plane::DepthMap, ImageIoError> {
    let plane = read_pfm(path)?;
    let (h, w, channels) = plane.dim();
    if channels != 1 {
        return Err(ImageIoError::layout(
            path,
            format!("depth map has {channels} channels, expected 1"),
        ));
    }
    Ok(plane.into_shape((h, w)).expect("single channel reshape"))
}

/// Write a depth map as a single-channel PFM.
pub fn write_pfm_depth(
    path: &Path,
    depth: &crate::plane::DepthMap,
) -> Result<(), ImageIoError> {
    let (h, w) = depth.dim();
    let plane = depth
        .clone()
        .into_shape((h, w, 1))
        .expect("single channel reshape");
    write_pfm(path, &plane)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use tempfile::tempdir;

    #[test]
    fn color_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.pfm");
        let mut plane = Array3::zeros((3, 2, 3));
        for (i, v) in plane.iter_mut().enumerate() {
            *v = (i as f32) * 0.125 - 0.5;
        }
        write_pfm(&path, &plane).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(plane, back);
    }

    #[test]
    fn gray_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.pfm");
        let mut depth = ndarray::Array2::zeros((4, 5));
        for (i, v) in depth.iter_mut().enumerate() {
            *v = 1.0 + i as f32;
        }
        write_pfm_depth(&path, &depth).unwrap();
        assert_eq!(read_pfm_depth(&path).unwrap(), depth);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"P6\n1 1\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(
            read_pfm(&path),
            Err(ImageIoError::Decode { .. })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.pfm");
        std::fs::write(&path, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(read_pfm(&path), Err(ImageIoError::Io { .. })));
    }
}
