//! File formats: sample CSVs, IDX image tensors, trajectory tensors and
//! model checkpoints.

mod checkpoint;
mod csv;
mod idx;
mod tensor;

pub use self::checkpoint::{Checkpoint, TensorEntry, CHECKPOINT_VERSION};
pub use self::csv::{read_matrix_csv, write_matrix_csv, write_rows_csv};
pub use self::idx::{read_idx, write_idx_ubyte};
pub use self::tensor::{read_tensor, read_trajectories, write_tensor, write_trajectories, TensorHeader};

use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Idx,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "idx" => Ok(DataFormat::Idx),
            other => Err(Error::Config(format!(
                "unknown data format {other:?}, expected csv or idx"
            ))),
        }
    }
}

/// Loads an `n x d` sample matrix. With `dim` set, a different width is an error.
pub fn ingest(path: &Path, format: DataFormat, dim: Option<usize>) -> Result<Array2<f64>> {
    let m = match format {
        DataFormat::Csv => read_matrix_csv(path)?,
        DataFormat::Idx => read_idx(path)?,
    };
    if let Some(d) = dim {
        if m.ncols() != d {
            return Err(Error::format(
                path,
                format!("data has {} columns, configuration expects {d}", m.ncols()),
            ));
        }
    }
    Ok(m)
}
