//! Plain vs penalized training on the anisotropic 3D Gaussian, with the
//! trajectory figure. Takes about a minute in release mode.
//!
//! `cargo run --release --example toy_paths -- runs`

use std::path::PathBuf;

use sparse_score::config::RunConfig;
use sparse_score::experiment::cmd_toy;

fn main() -> sparse_score::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "runs".into()));
    let cfg = RunConfig::default();
    let report = cmd_toy(&cfg, &root)?;
    for m in &report.metrics {
        if m.metric != "axis_displacement" {
            println!("{:<20} {:<12} {:.5}", m.metric, m.params["method"], m.value);
        }
    }
    println!("figure: {}", root.join(&report.run_id).join("toy.svg").display());
    Ok(())
}
