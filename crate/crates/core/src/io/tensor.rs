//! Tensor file: one JSON header line, then the values as little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SampleRun;

pub const DTYPE: &str = "f64-le";
const CHUNK_VALUES: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dims: Vec<usize>,
    pub dtype: String,
    pub seed: u64,
    /// Time grid the leading steps axis follows, if any.
    pub grid: Vec<f64>,
}

pub fn write_tensor(path: &Path, header: &TensorHeader, data: &[f64]) -> Result<()> {
    let n: usize = header.dims.iter().product();
    if n != data.len() {
        return Err(Error::Shape {
            context: "tensor payload",
            expected: n,
            got: data.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * CHUNK_VALUES);
    for chunk in data.chunks(CHUNK_VALUES) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<(TensorHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format(path, "missing header line"));
    }
    let header: TensorHeader =
        serde_json::from_slice(&line).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::format(path, format!("unsupported dtype {:?}", header.dtype)));
    }
    let n: usize = header.dims.iter().product();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, header declares {}", bytes.len(), 8 * n),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, data))
}

/// Stores the `chains x (steps + 1) x d` trajectories of a recorded run.
pub fn write_trajectories(path: &Path, run: &SampleRun) -> Result<()> {
    let traj = run
        .trajectories
        .as_ref()
        .ok_or_else(|| Error::Config("run was sampled without trajectory recording".into()))?;
    let header = TensorHeader {
        dims: traj.shape().to_vec(),
        dtype: DTYPE.into(),
        seed: run.seed,
        grid: run.grid.clone(),
    };
    let flat: Vec<f64> = traj.iter().copied().collect();
    write_tensor(path, &header, &flat)
}

pub fn read_trajectories(path: &Path) -> Result<(TensorHeader, Array3<f64>)> {
    let (header, data) = read_tensor(path)?;
    if header.dims.len() != 3 {
        return Err(Error::format(
            path,
            format!("expected 3 dims, got {}", header.dims.len()),
        ));
    }
    let shape = (header.dims[0], header.dims[1], header.dims[2]);
    let arr = Array3::from_shape_vec(shape, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((header, arr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let header = TensorHeader {
            dims: vec![2, 3, 2],
            dtype: DTYPE.into(),
            seed: 9,
            grid: vec![1.0, 0.5, 1e-5],
        };
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 7.0 - 0.3).collect();
        write_tensor(&p, &header, &data).unwrap();
        let (h, back) = read_tensor(&p).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, data);
        let (_, arr) = read_trajectories(&p).unwrap();
        assert_eq!(arr[[1, 2, 1]], data[11]);

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_tensor(&p), Err(Error::Format { .. })));
        assert!(write_tensor(&p, &header, &data[..5]).is_err());
    }
}
