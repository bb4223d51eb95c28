//! The tilting identity per step and the term-by-term bound report for the
//! exact score of the toy target.

use sparse_score::config::RunConfig;
use sparse_score::experiment::cmd_audit;

fn main() -> sparse_score::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.set("sampler.chains", "1000")?;
    let root = std::env::temp_dir().join("sparse-score-audit");
    let report = cmd_audit(&cfg, &root, None)?;
    for m in &report.metrics {
        println!("{:<30} {:.6e}", m.metric, m.value);
    }
    let audit = std::fs::read_to_string(root.join(&report.run_id).join("audit.json"))?;
    println!("{audit}");
    Ok(())
}
