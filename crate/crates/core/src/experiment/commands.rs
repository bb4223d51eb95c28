use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    context, final_losses, run_dir, sample_metrics, sample_score, train_model, training_data, write_loss_figure,
    write_samples, write_train_log, RunReport,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{write_rows_csv, write_trajectories, Checkpoint};
use crate::metrics::{
    bound_audit, posterior_grid, score_error, sparsity_profile, tilting_residual, tilting_residual_with, AuditConfig,
    MetricRecord, TimeBucket,
};
use crate::score::{AnalyticScore, ScoreFunction};
use crate::scorenet::ScoreModel;
use crate::target::{DiagGaussian, TargetDensity};

const EVAL_STREAM: u64 = 4;
/// Score shift used to show the tilting identity is sensitive.
const TILT_SHIFT: f64 = 0.1;

#[derive(Serialize)]
struct TrainSummary<'a> {
    seed: u64,
    config_hash: &'a str,
    epochs: usize,
    steps: usize,
    param_count: usize,
    param_l1: f64,
    final_kappa: f64,
    final_fit_term: f64,
    final_reg_term: f64,
    final_total: f64,
    seconds: f64,
    config: &'a std::collections::BTreeMap<String, String>,
}

pub fn cmd_train(cfg: &RunConfig, root: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let seed = cfg.u64("train.seed")?;
    let mut report = RunReport::new("train", cfg, seed);
    let dir = run_dir(root, &report)?;
    let target = cfg.target()?;
    let data = training_data(cfg, &target).map_err(context("load training data"))?;
    let started = Instant::now();
    let (model, history) = train_model(cfg, data.view(), Some(&dir)).map_err(context("train"))?;
    let seconds = started.elapsed().as_secs_f64();

    let ckpt = dir.join("checkpoint.json");
    Checkpoint::from_model(&model, &report.config_hash).save(&ckpt)?;
    let log = dir.join("train_log.csv");
    write_train_log(&log, &history)?;
    let data_csv = dir.join("data.csv");
    write_samples(&data_csv, data.view())?;
    let (fit, reg, total) = final_losses(&history);
    let summary = TrainSummary {
        seed,
        config_hash: &report.config_hash,
        epochs: history.kappa_trace.len(),
        steps: history.steps.len(),
        param_count: model.param_count(),
        param_l1: model.l1_norm(),
        final_kappa: model.kappa(),
        final_fit_term: fit,
        final_reg_term: reg,
        final_total: total,
        seconds,
        config: &report.config,
    };
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;
    report.artifacts.extend([ckpt, log.clone(), data_csv, summary_path]);
    let every = cfg.usize("train.checkpoint_every")?;
    if every > 0 {
        for epoch in (every..=history.kappa_trace.len()).step_by(every) {
            report.artifacts.push(dir.join(format!("checkpoint-epoch{epoch}.json")));
        }
    }
    if cfg.bool("output.plot")? {
        let svg = dir.join("loss.svg");
        write_loss_figure(&log, &svg)?;
        report.artifacts.push(svg);
    }
    report.metrics.extend([
        MetricRecord::new("final_kappa", model.kappa(), seed),
        MetricRecord::new("fit_term", fit, seed).param("epoch", history.kappa_trace.len()),
        MetricRecord::new("total_loss", total, seed).param("epoch", history.kappa_trace.len()),
    ]);
    report.write(&dir)?;
    Ok(report)
}

fn load_model(checkpoint: Option<&Path>, target: &TargetDensity) -> Result<Option<ScoreModel>> {
    let Some(path) = checkpoint else {
        return Ok(None);
    };
    let model = Checkpoint::load(path)?.to_model()?;
    if model.dim() != target.dim() {
        return Err(Error::Shape {
            context: "checkpoint dimension vs target",
            expected: target.dim(),
            got: model.dim(),
        });
    }
    Ok(Some(model))
}

/// Samples from a checkpoint, or from the exact score of the configured
/// target when no checkpoint is given.
pub fn cmd_sample(cfg: &RunConfig, root: &Path, checkpoint: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let seed = cfg.u64("sampler.seed")?;
    let mut report = RunReport::new("sample", cfg, seed);
    let dir = run_dir(root, &report)?;
    let target = cfg.target()?;
    let model = load_model(checkpoint, &target)?;
    let oracle = AnalyticScore::new(&target, cfg.schedule()?);
    let score: &dyn ScoreFunction = match &model {
        Some(m) => m,
        None => &oracle,
    };
    let run = sample_score(cfg, score).map_err(context("sample"))?;
    let samples = dir.join("samples.csv");
    write_samples(&samples, run.finals.view())?;
    report.artifacts.push(samples);
    if run.trajectories.is_some() {
        let traj = dir.join("trajectories.bin");
        write_trajectories(&traj, &run)?;
        report.artifacts.push(traj);
    }
    let source = if model.is_some() { "checkpoint" } else { "exact" };
    report.metrics.extend(
        sample_metrics(cfg, &target, run.finals.view())?
            .into_iter()
            .map(|m| m.param("score", source)),
    );
    report.write(&dir)?;
    Ok(report)
}

/// Score error, sparsity profiles of the target and sample KL.
pub fn cmd_eval(cfg: &RunConfig, root: &Path, checkpoint: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let seed = cfg.u64("sampler.seed")?;
    let mut report = RunReport::new("eval", cfg, seed);
    let dir = run_dir(root, &report)?;
    let target = cfg.target()?;
    let sched = cfg.schedule()?;
    let model = load_model(checkpoint, &target)?;
    let oracle = AnalyticScore::new(&target, sched);
    let score: &dyn ScoreFunction = match &model {
        Some(m) => m,
        None => &oracle,
    };
    let source = if model.is_some() { "checkpoint" } else { "exact" };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM);

    let (n_t, n_x) = (cfg.usize("metrics.n_t")?, cfg.usize("metrics.n_x")?);
    let err = score_error(score, &target, &sched, n_t, n_x, &mut rng)?;
    report.metrics.push(
        MetricRecord::new("score_error", err.mean, seed)
            .with_stderr(err.stderr)
            .param("score", source)
            .param("n_t", n_t)
            .param("n_x", n_x),
    );

    let levels = cfg.usize_list("metrics.s_levels")?;
    let n_mc = cfg.usize("metrics.n_mc")?;
    let mut rows = Vec::new();
    for bucket in [TimeBucket::All, TimeBucket::Early, TimeBucket::Late] {
        let p = sparsity_profile(&target, &levels, &sched, bucket, n_mc, &mut rng)?;
        for ((s, e), se) in p.s_levels.iter().zip(&p.errors).zip(&p.stderr) {
            rows.push(vec![
                bucket.name().to_string(),
                s.to_string(),
                e.to_string(),
                se.to_string(),
            ]);
            report.metrics.push(
                MetricRecord::new("sparsity_error", *e, seed)
                    .with_stderr(*se)
                    .param("s", *s)
                    .param("bucket", bucket.name()),
            );
        }
    }
    let sparsity = dir.join("sparsity.csv");
    write_rows_csv(&sparsity, &["bucket", "s", "error", "stderr"], rows)?;

    let run = sample_score(cfg, score).map_err(context("sample"))?;
    let samples = dir.join("samples.csv");
    write_samples(&samples, run.finals.view())?;
    report.metrics.extend(
        sample_metrics(cfg, &target, run.finals.view())?
            .into_iter()
            .map(|m| m.param("score", source)),
    );
    report.artifacts.extend([sparsity, samples]);
    report.write(&dir)?;
    Ok(report)
}

/// The tilting check on a one-dimensional Gaussian and the term-by-term
/// bound report for a checkpoint (or the exact score).
pub fn cmd_audit(cfg: &RunConfig, root: &Path, checkpoint: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let seed = cfg.u64("sampler.seed")?;
    let mut report = RunReport::new("audit", cfg, seed);
    let dir = run_dir(root, &report)?;
    let target = cfg.target()?;
    let sched = cfg.schedule()?;

    // first coordinate of a Gaussian target, else a standard normal
    let (mu, var) = match target.as_gaussian() {
        Some(g) => (g.mean()[0], g.var()[0]),
        None => (0.0, 1.0),
    };
    let line = DiagGaussian::new(vec![mu], vec![var])?;
    let discrete = cfg.discrete_schedule()?;
    let points = cfg.usize("metrics.tilting_points")?;
    let x_t = cfg.f64("metrics.tilting_x")?;
    let mut rows = Vec::new();
    let (mut worst, mut least_shifted) = (0.0f64, f64::INFINITY);
    for t in 1..=discrete.steps() {
        let grid = posterior_grid(&line, &discrete, t, x_t, points, 4.0)?;
        let exact = tilting_residual(&line, &discrete, t, &grid, x_t)?;
        let shifted = tilting_residual_with(&line, &discrete, t, &grid, x_t, TILT_SHIFT)?;
        worst = worst.max(exact);
        least_shifted = least_shifted.min(shifted);
        rows.push(vec![t.to_string(), exact.to_string(), shifted.to_string()]);
    }
    let tilting = dir.join("tilting.csv");
    write_rows_csv(&tilting, &["t", "residual", "residual_shifted"], rows)?;
    report.metrics.extend([
        MetricRecord::new("tilting_residual_max", worst, seed)
            .param("mean", mu)
            .param("var", var)
            .param("steps", discrete.steps()),
        MetricRecord::new("tilting_residual_shifted_min", least_shifted, seed).param("shift", TILT_SHIFT),
    ]);

    let model = load_model(checkpoint, &target)?;
    let oracle = AnalyticScore::new(&target, sched);
    let (score, kappa, param_count): (&dyn ScoreFunction, f64, usize) = match &model {
        Some(m) => (m, m.kappa(), m.param_count()),
        None => (&oracle, 0.0, 0),
    };
    let audit_cfg = AuditConfig {
        s: cfg.usize("metrics.audit_s")?,
        b: cfg.audit_b()?,
        r: cfg.f64("objective.r")?,
        kappa,
        n_mc: cfg.usize("metrics.n_mc")?,
        n_train: cfg.usize("train.n")?,
        param_count,
        knn_k: cfg.usize("metrics.knn_k")?,
        sampler: cfg.sampler()?,
    };
    let audit = bound_audit(score, &target, &sched, &audit_cfg).map_err(context("bound audit"))?;
    let audit_path = dir.join("audit.json");
    fs::write(&audit_path, serde_json::to_vec_pretty(&audit)?)?;
    for (name, value) in [
        ("bound_init_term", audit.init_term),
        ("bound_reverse_term", audit.reverse_term),
        ("bound_estimation_term", audit.estimation_term),
        ("bound_computed_sum", audit.computed_sum),
        ("kl_measured", audit.kl_measured),
    ] {
        report.metrics.push(
            MetricRecord::new(name, value, seed)
                .param("steps", audit.steps)
                .param("s", audit.s),
        );
    }
    report.artifacts.extend([tilting, audit_path]);
    report.write(&dir)?;
    Ok(report)
}
