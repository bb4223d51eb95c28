//! End-to-end runs behind the command-line subcommands.
//!
//! Each command resolves a [`RunConfig`], writes its artifacts into
//! `<root>/<command>-<hash prefix>-seed<seed>/` and finishes with a
//! `report.json` listing every artifact and metric.

mod commands;
mod plot;
mod sweep;
mod toy;

pub use commands::{cmd_audit, cmd_eval, cmd_sample, cmd_train};
pub use plot::{toy_figure, write_loss_figure};
pub use sweep::{cell_config, cmd_sweep, run_cell, sweep_target, CellResult};
pub use toy::{cmd_toy, displacement_ratio, DisplacementStats};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{ingest, write_matrix_csv, write_rows_csv, Checkpoint};
use crate::metrics::{kl_knn, MetricRecord};
use crate::sampler::{langevin_sample, SampleRun};
use crate::score::ScoreFunction;
use crate::scorenet::ScoreModel;
use crate::target::{kl_gaussian_moments, TargetDensity};
use crate::trainer::{train_with, TrainHistory};

const DATA_STREAM: u64 = 2;
const REFERENCE_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub revision: String,
    pub seed: u64,
    /// Resolved configuration, every key.
    pub config: BTreeMap<String, String>,
    pub metrics: Vec<MetricRecord>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn new(command: &str, cfg: &RunConfig, seed: u64) -> Self {
        let hash = cfg.hash();
        Self {
            run_id: run_id(command, &hash, seed),
            command: command.to_string(),
            config_hash: hash,
            revision: revision(),
            seed,
            config: cfg.to_map(),
            metrics: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<&MetricRecord> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    /// Writes `report.json` and `metrics.jsonl` into `dir`. Fails if a
    /// listed artifact is missing.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        let metrics_path = dir.join("metrics.jsonl");
        let mut lines = String::new();
        for m in &self.metrics {
            lines.push_str(&serde_json::to_string(m)?);
            lines.push('\n');
        }
        fs::write(&metrics_path, lines)?;
        self.artifacts.push(metrics_path);
        if let Some(missing) = self.artifacts.iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("artifact {} was not written", missing.display())));
        }
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}

pub fn run_id(command: &str, hash: &str, seed: u64) -> String {
    format!("{command}-{}-seed{seed}", &hash[..12.min(hash.len())])
}

/// `git describe --always --dirty` of the working directory, or the crate
/// version when git is unavailable.
pub fn revision() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--abbrev=12"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("unversioned-{}", env!("CARGO_PKG_VERSION")))
}

pub(crate) fn run_dir(root: &Path, report: &RunReport) -> Result<PathBuf> {
    let dir = root.join(&report.run_id);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Training rows: `train.data` when set, else `train.n` target draws.
pub fn training_data(cfg: &RunConfig, target: &TargetDensity) -> Result<Array2<f64>> {
    if let Some((path, format)) = cfg.data_source()? {
        let want = cfg.usize("train.data_dim")?;
        return ingest(&path, format, (want > 0).then_some(want));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("train.seed")?);
    rng.set_stream(DATA_STREAM);
    Ok(target.sample(cfg.usize("train.n")?, &mut rng))
}

/// Fresh target draws that generated samples are compared against.
pub fn reference_samples(cfg: &RunConfig, target: &TargetDensity) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("sampler.seed")?);
    rng.set_stream(REFERENCE_STREAM);
    Ok(target.sample(cfg.usize("metrics.reference")?, &mut rng))
}

/// Trains with the settings for `objective.r`, writing periodic checkpoints
/// into `checkpoint_dir` when `train.checkpoint_every > 0`.
pub fn train_model(
    cfg: &RunConfig,
    data: ArrayView2<'_, f64>,
    checkpoint_dir: Option<&Path>,
) -> Result<(ScoreModel, TrainHistory)> {
    let (train_cfg, net) = cfg.method(cfg.f64("objective.r")?)?;
    let every = cfg.usize("train.checkpoint_every")?;
    let hash = cfg.hash();
    train_with(data, &train_cfg, &cfg.schedule()?, &net, |epoch, model| {
        if let Some(dir) = checkpoint_dir {
            if every > 0 && epoch % every == 0 {
                Checkpoint::from_model(model, &hash).save(&dir.join(format!("checkpoint-epoch{epoch}.json")))?;
            }
        }
        Ok(())
    })
}

pub fn sample_score<S: ScoreFunction + ?Sized>(cfg: &RunConfig, score: &S) -> Result<SampleRun> {
    langevin_sample(score, &cfg.schedule()?, &cfg.sampler()?)
}

/// knn KL from fresh target draws to `samples`, plus the moment-matched KL
/// when the target is Gaussian.
pub fn sample_metrics(
    cfg: &RunConfig,
    target: &TargetDensity,
    samples: ArrayView2<'_, f64>,
) -> Result<Vec<MetricRecord>> {
    let seed = cfg.u64("sampler.seed")?;
    let k = cfg.usize("metrics.knn_k")?;
    let reference = reference_samples(cfg, target)?;
    let mut out = vec![MetricRecord::new("kl_knn", kl_knn(reference.view(), samples, k)?, seed)
        .param("k", k)
        .param("direction", "target||samples")
        .param("reference", reference.nrows())];
    if let Some(g) = target.as_gaussian() {
        out.push(
            MetricRecord::new("kl_moment", kl_gaussian_moments(samples, g)?, seed).param("direction", "fitted||target"),
        );
    }
    Ok(out)
}

pub(crate) fn column_names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|j| format!("{prefix}{j}")).collect()
}

pub(crate) fn write_samples(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    write_matrix_csv(path, &column_names("x", m.ncols()), m)
}

pub(crate) fn write_train_log(path: &Path, history: &TrainHistory) -> Result<()> {
    write_rows_csv(
        path,
        &["epoch", "step", "fit_term", "reg_term", "total", "kappa"],
        history.steps.iter().map(|s| {
            vec![
                s.epoch.to_string(),
                s.step.to_string(),
                s.loss.fit_term.to_string(),
                s.loss.reg_term.to_string(),
                s.loss.total.to_string(),
                s.kappa.to_string(),
            ]
        }),
    )
}

/// Mean losses of the last epoch.
pub(crate) fn final_losses(history: &TrainHistory) -> (f64, f64, f64) {
    let last = history.steps.last().map(|s| s.epoch).unwrap_or(0);
    let rows: Vec<_> = history.steps.iter().filter(|s| s.epoch == last).collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&crate::objective::LossBreakdown) -> f64| rows.iter().map(|s| f(&s.loss)).sum::<f64>() / n;
    (mean(|l| l.fit_term), mean(|l| l.reg_term), mean(|l| l.total))
}

pub(crate) fn context(stage: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let stage = stage.into();
    move |e| Error::Stage {
        stage,
        source: Box::new(e),
    }
}
