//! IDX tensors of unsigned bytes: `00 00 08 ndims`, big-endian `u32` sizes,
//! then the payload in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

/// First axis becomes rows, the rest is flattened; bytes are scaled by 1/255.
pub fn read_idx(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::format(path, "file shorter than the 4-byte magic"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(path, "bad magic: first two bytes must be zero"));
    }
    if bytes[2] != UBYTE {
        return Err(Error::format(
            path,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::format(path, "zero dimensions"));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::format(
            path,
            format!("truncated header: {} of {header_len} bytes", bytes.len()),
        ));
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(path, "dimension product overflows"))?;
    let payload = &bytes[header_len..];
    if payload.len() != total {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, header declares {total}", payload.len()),
        ));
    }
    let rows = dims[0];
    let cols = dims[1..].iter().product::<usize>();
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_idx_ubyte(path: &Path, dims: &[u32], data: &[u8]) -> Result<()> {
    let total: usize = dims.iter().map(|&d| d as usize).product();
    if dims.is_empty() || dims.len() > 255 || total != data.len() {
        return Err(Error::Shape {
            context: "idx payload",
            expected: total,
            got: data.len(),
        });
    }
    let mut out = vec![0, 0, UBYTE, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    fs::write(path, out)?;
    Ok(())
}
