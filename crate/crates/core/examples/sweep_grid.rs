//! A small Gaussian-uniform grid: how the penalized model compares with
//! plain score matching as the number of Gaussian coordinates grows.
//!
//! `cargo run --release --example sweep_grid`

use sparse_score::config::RunConfig;
use sparse_score::experiment::cmd_sweep;

fn main() -> sparse_score::Result<()> {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("sweep.dim", "4"),
        ("sweep.s", "1, 4"),
        ("sweep.seeds", "0, 1"),
        ("train.epochs", "150"),
        ("sampler.chains", "1000"),
    ] {
        cfg.set(k, v)?;
    }
    let root = std::env::temp_dir().join("sparse-score-sweep");
    let report = cmd_sweep(&cfg, &root)?;
    for m in report.metrics.iter().filter(|m| m.metric == "kl_knn_mean") {
        println!(
            "s = {}  r = {:<6} KL {:.4} +- {:.4}",
            m.params["s"],
            m.params["r"],
            m.value,
            m.stderr.unwrap_or(0.0)
        );
    }
    println!("tables in {}", root.join(&report.run_id).display());
    Ok(())
}
