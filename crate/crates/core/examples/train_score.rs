//! Trains the penalized score model on the anisotropic toy target and
//! reports how the fit, the scale and the parameter norm evolve.
//!
//! `cargo run --release --example train_score -- 200`

use sparse_score::config::RunConfig;
use sparse_score::experiment::{train_model, training_data};
use sparse_score::io::Checkpoint;

fn main() -> sparse_score::Result<()> {
    let epochs = std::env::args().nth(1).unwrap_or_else(|| "100".into());
    let mut cfg = RunConfig::default();
    cfg.set("train.epochs", &epochs)?;
    let target = cfg.target()?;
    let data = training_data(&cfg, &target)?;
    let (model, history) = train_model(&cfg, data.view(), None)?;

    let epochs = history.kappa_trace.len();
    for e in (1..=epochs).filter(|e| e % (epochs / 10).max(1) == 0 || *e == 1) {
        println!(
            "epoch {e:>4}  fit {:>8.4}  kappa {:.4}",
            history.epoch_fit(e).unwrap_or(f64::NAN),
            history.kappa_trace[e - 1]
        );
    }
    println!("{} parameters, l1 norm {:.2}", model.param_count(), model.l1_norm());

    let path = std::env::temp_dir().join("sparse-score-example.json");
    Checkpoint::from_model(&model, &cfg.hash()).save(&path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
