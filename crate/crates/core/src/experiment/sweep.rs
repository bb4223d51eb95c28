use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_dir, sample_metrics, sample_score, train_model, training_data, RunReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::write_rows_csv;
use crate::metrics::{Estimate, MetricRecord};
use crate::target::TargetDensity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub r: f64,
    pub steps: usize,
    pub s: usize,
    pub seed: u64,
    pub kl: Option<f64>,
    pub kappa: Option<f64>,
    pub error: Option<String>,
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Configuration of one grid cell: the product target with `s` Gaussian
/// coordinates followed by uniform ones, and the cell's penalty, step count
/// and seed.
pub fn cell_config(cfg: &RunConfig, r: f64, steps: usize, s: usize, seed: u64) -> Result<RunConfig> {
    let d = cfg.usize("sweep.dim")?;
    if s == 0 || s > d {
        return Err(Error::Config(format!("sweep.s entry {s} outside [1, {d}]")));
    }
    let var = cfg.f64("sweep.gaussian_var")?;
    let w = cfg.f64("sweep.uniform_half_width")?;
    let mut c = cfg.clone();
    c.set("target.kind", "gaussian_uniform_product")?;
    c.set("target.gaussian_coords", &join(0..s))?;
    c.set("target.mean", &join(std::iter::repeat_n(0.0, s)))?;
    c.set("target.var", &join(std::iter::repeat_n(var, s)))?;
    c.set(
        "target.uniform_bounds",
        &join(std::iter::repeat_n(format!("{}:{w}", -w), d - s)),
    )?;
    c.set("objective.r", &r.to_string())?;
    c.set("sampler.steps", &steps.to_string())?;
    c.set("train.seed", &seed.to_string())?;
    c.set("sampler.seed", &seed.to_string())?;
    Ok(c)
}

pub fn sweep_target(cfg: &RunConfig, s: usize) -> Result<TargetDensity> {
    cell_config(cfg, 0.0, 2, s, 0)?.target()
}

/// Train, sample and score one cell: `(knn KL, final kappa)`.
pub fn run_cell(cell: &RunConfig) -> Result<(f64, f64)> {
    let target = cell.target()?;
    let data = training_data(cell, &target)?;
    let (model, _) = train_model(cell, data.view(), None)?;
    let run = sample_score(cell, &model)?;
    let kl = sample_metrics(cell, &target, run.finals.view())?
        .into_iter()
        .find(|m| m.metric == "kl_knn")
        .expect("knn KL is always reported")
        .value;
    Ok((kl, model.kappa()))
}

/// Every `(steps, s, r, seed)` cell on a pool of `sweep.jobs` threads.
/// Failed cells are recorded with their error and left out of the means.
pub fn cmd_sweep(cfg: &RunConfig, root: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let rs = cfg.f64_list("sweep.r")?;
    let step_list = cfg.usize_list("sweep.steps")?;
    let levels = cfg.usize_list("sweep.s")?;
    let seeds = cfg.u64_list("sweep.seeds")?;
    for (key, empty) in [
        ("sweep.r", rs.is_empty()),
        ("sweep.steps", step_list.is_empty()),
        ("sweep.s", levels.is_empty()),
        ("sweep.seeds", seeds.is_empty()),
    ] {
        if empty {
            return Err(Error::Config(format!("{key} must list at least one value")));
        }
    }
    let mut cells = Vec::new();
    for &steps in &step_list {
        for &s in &levels {
            for &r in &rs {
                for &seed in &seeds {
                    cells.push((r, steps, s, seed, cell_config(cfg, r, steps, s, seed)?));
                }
            }
        }
    }
    for (.., c) in &cells {
        c.validate()?;
    }

    let mut report = RunReport::new("sweep", cfg, seeds[0]);
    let dir = run_dir(root, &report)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.usize("sweep.jobs")?.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build sweep pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|(r, steps, s, seed, c)| {
                let out = run_cell(c);
                CellResult {
                    r: *r,
                    steps: *steps,
                    s: *s,
                    seed: *seed,
                    kl: out.as_ref().ok().map(|o| o.0),
                    kappa: out.as_ref().ok().map(|o| o.1),
                    error: out.err().map(|e| e.to_string()),
                }
            })
            .collect()
    });

    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let cells_csv = dir.join("cells.csv");
    write_rows_csv(
        &cells_csv,
        &["r", "steps", "s", "seed", "kl", "kappa", "status", "error"],
        results.iter().map(|c| {
            vec![
                c.r.to_string(),
                c.steps.to_string(),
                c.s.to_string(),
                c.seed.to_string(),
                opt(c.kl),
                opt(c.kappa),
                if c.error.is_none() { "ok" } else { "failed" }.to_string(),
                c.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    for c in &results {
        if let Some(kl) = c.kl {
            report.metrics.push(
                MetricRecord::new("kl_knn", kl, c.seed)
                    .param("r", c.r)
                    .param("steps", c.steps)
                    .param("s", c.s),
            );
        }
    }

    // (steps, s, r bits) -> successful KLs; the key keeps grid order stable
    let mut groups: BTreeMap<(usize, usize, u64), Vec<f64>> = BTreeMap::new();
    for c in &results {
        let entry = groups.entry((c.steps, c.s, c.r.to_bits())).or_default();
        if let Some(kl) = c.kl {
            entry.push(kl);
        }
    }
    let agg: BTreeMap<_, Option<Estimate>> = groups
        .iter()
        .map(|(k, v)| (*k, (!v.is_empty()).then(|| Estimate::from_samples(v))))
        .collect();
    let aggregate_csv = dir.join("aggregate.csv");
    write_rows_csv(
        &aggregate_csv,
        &["r", "steps", "s", "n", "kl_mean", "kl_stderr"],
        groups.iter().map(|(&(steps, s, r), v)| {
            let e = agg[&(steps, s, r)];
            vec![
                f64::from_bits(r).to_string(),
                steps.to_string(),
                s.to_string(),
                v.len().to_string(),
                opt(e.map(|e| e.mean)),
                opt(e.map(|e| e.stderr)),
            ]
        }),
    )?;
    for (&(steps, s, r), e) in &agg {
        if let Some(e) = e {
            report.metrics.push(
                MetricRecord::new("kl_knn_mean", e.mean, seeds[0])
                    .with_stderr(e.stderr)
                    .param("r", f64::from_bits(r))
                    .param("steps", steps)
                    .param("s", s)
                    .param("seeds", seeds.len()),
            );
        }
    }

    let mut dominance = Vec::new();
    for &steps in &step_list {
        for &s in &levels {
            let Some(Some(base)) = agg.get(&(steps, s, 0f64.to_bits())) else {
                continue;
            };
            for &r in rs.iter().filter(|r| **r != 0.0) {
                if let Some(Some(reg)) = agg.get(&(steps, s, r.to_bits())) {
                    dominance.push(vec![
                        steps.to_string(),
                        s.to_string(),
                        r.to_string(),
                        base.mean.to_string(),
                        base.stderr.to_string(),
                        reg.mean.to_string(),
                        reg.stderr.to_string(),
                        (reg.mean - base.mean).to_string(),
                    ]);
                }
            }
        }
    }
    let dominance_csv = dir.join("dominance.csv");
    write_rows_csv(
        &dominance_csv,
        &[
            "steps",
            "s",
            "r",
            "baseline_mean",
            "baseline_stderr",
            "regularized_mean",
            "regularized_stderr",
            "difference",
        ],
        dominance,
    )?;
    report.artifacts.extend([cells_csv, aggregate_csv, dominance_csv]);
    report.write(&dir)?;
    Ok(report)
}
