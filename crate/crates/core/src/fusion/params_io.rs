//! Binary parameter file for the fusion block.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NFFP"
//! 4       4     version (u32, currently 1)
//! 8       4     c_in   (u32)  input channels
//! 12      4     c_mid  (u32)  branch channels
//! 16      4     c_out  (u32)  output channels
//! 20      4*n   f32 values in FusionParams::flatten order
//! ```
//!
//! `n` is `FusionParams::value_count(c_in, c_mid, c_out)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::FusionParams;

const MAGIC: &[u8; 4] = b"NFFP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParamsIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad parameter file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ParamsIoError {
    ParamsIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> ParamsIoError {
    ParamsIoError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_params(path: &Path, params: &FusionParams<f32>) -> Result<(), ParamsIoError> {
    let (c_in, c_mid, c_out) = params.channels();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(MAGIC).map_err(|e| io_err(path, e))?;
    for value in [VERSION, c_in as u32, c_mid as u32, c_out as u32] {
        writer
            .write_all(&value.to_le_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    for v in params.flatten() {
        writer
            .write_all(&v.to_le_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn read_params(path: &Path) -> Result<FusionParams<f32>, ParamsIoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(format_err(path, format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |reader: &mut BufReader<File>| -> Result<u32, ParamsIoError> {
        reader.read_exact(&mut word).map_err(|e| io_err(path, e))?;
        Ok(u32::from_le_bytes(word))
    };
    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let c_in = read_u32(&mut reader)? as usize;
    let c_mid = read_u32(&mut reader)? as usize;
    let c_out = read_u32(&mut reader)? as usize;
    if c_in == 0 || c_mid == 0 || c_out == 0 {
        return Err(format_err(path, "zero channel count"));
    }

    let count = FusionParams::<f32>::value_count(c_in, c_mid, c_out);
    let mut raw = vec![0u8; count * 4];
    reader.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FusionParams::from_flat(c_in, c_mid, c_out, &values)
        .map_err(|e| format_err(path, e.to_string()))
}
