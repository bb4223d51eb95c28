use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

fn csv_err(path: &Path, e: ::csv::Error) -> Error {
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes a header row then one row per sample. Values use the shortest
/// decimal that parses back to the same float.
pub fn write_matrix_csv(path: &Path, header: &[String], m: ArrayView2<'_, f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::Shape {
            context: "csv header",
            expected: m.ncols(),
            got: header.len(),
        });
    }
    let mut w = ::csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes arbitrary string rows under `header`.
pub fn write_rows_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = ::csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV with a header row. Ragged rows and non-numeric cells
/// are format errors.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let width = r.headers().map_err(|e| csv_err(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("row {}, column {}: not a number: {cell:?}", i + 1, j + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || width == 0 {
        return Err(Error::format(path, "no data rows"));
    }
    Array2::from_shape_vec((rows, width), data).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = ndarray::arr2(&[[0.1, -1e-300, 1.0 / 3.0], [f64::MAX, 2.5e-7, -0.0]]);
        let header: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
        write_matrix_csv(&p, &header, m.view()).unwrap();
        let back = read_matrix_csv(&p).unwrap();
        assert_eq!(back.dim(), m.dim());
        for (a, b) in back.iter().zip(&m) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(fs::read_to_string(&p).unwrap().starts_with("x0,x1,x2\n"));
    }

    #[test]
    fn ragged_and_garbage_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "a,b\n1,x\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(Error::Format { .. })));
        fs::write(&p, "a,b\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn quoted_cells_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        fs::write(&p, "\"a\",\"b, c\"\r\n\"1.5\",2\r\n").unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), ndarray::arr2(&[[1.5, 2.0]]));
    }
}
