//! Loading training rows from CSV and IDX files.

use sparse_score::io::{ingest, write_idx_ubyte, write_matrix_csv, DataFormat};

fn main() -> sparse_score::Result<()> {
    let dir = std::env::temp_dir().join("sparse-score-ingest");
    std::fs::create_dir_all(&dir)?;

    let rows = ndarray::array![[0.1, -1.0, 2.5], [3.0, 0.25, -0.5]];
    let csv = dir.join("rows.csv");
    write_matrix_csv(&csv, &["a".into(), "b".into(), "c".into()], rows.view())?;
    println!("csv:\n{}", ingest(&csv, DataFormat::Csv, Some(3))?);

    // two 2x2 "images"
    let idx = dir.join("images.idx3-ubyte");
    write_idx_ubyte(&idx, &[2, 2, 2], &[0, 64, 128, 255, 255, 0, 0, 255])?;
    println!("idx:\n{}", ingest(&idx, DataFormat::Idx, None)?);

    match ingest(&csv, DataFormat::Csv, Some(4)) {
        Err(e) => println!("width check: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
