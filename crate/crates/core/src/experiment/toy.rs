use std::path::Path;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use super::{
    context, run_dir, sample_metrics, sample_score, toy_figure, train_model, training_data, write_samples,
    write_train_log, RunReport,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{write_rows_csv, write_trajectories, Checkpoint};
use crate::metrics::MetricRecord;

/// Per-step movement along the first axis relative to the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementStats {
    /// For every step: `sum_c |dx_0| / sum_c sum_{j>0} |dx_j|` over chains `c`.
    pub per_step: Vec<f64>,
    /// Mean of `per_step`.
    pub mean_ratio: f64,
    /// Mean `|dx_j|` per chain and step, for every axis.
    pub axis_mean: Vec<f64>,
}

/// Statistics of `chains x (steps + 1) x d` trajectories, `d >= 2`.
pub fn displacement_ratio(traj: &Array3<f64>) -> Result<DisplacementStats> {
    let (n, slices, d) = traj.dim();
    if d < 2 || slices < 2 || n == 0 {
        return Err(Error::Domain(format!(
            "displacement needs d >= 2 and at least one step, got {n} x {slices} x {d}"
        )));
    }
    let mut per_step = Vec::with_capacity(slices - 1);
    let mut axis_sum = vec![0.0; d];
    for k in 1..slices {
        let delta = &traj.index_axis(Axis(1), k) - &traj.index_axis(Axis(1), k - 1);
        let mut by_axis = vec![0.0; d];
        for row in delta.rows() {
            for (a, v) in by_axis.iter_mut().zip(row) {
                *a += v.abs();
            }
        }
        let rest: f64 = by_axis[1..].iter().sum();
        per_step.push(by_axis[0] / rest);
        axis_sum.iter_mut().zip(&by_axis).for_each(|(s, b)| *s += b);
    }
    let mean_ratio = per_step.iter().sum::<f64>() / per_step.len() as f64;
    let denom = (n * (slices - 1)) as f64;
    Ok(DisplacementStats {
        per_step,
        mean_ratio,
        axis_mean: axis_sum.into_iter().map(|s| s / denom).collect(),
    })
}

/// Trains a plain and a penalized model on the same draws and seeds,
/// samples both with recorded paths and writes the three-panel figure.
///
/// The penalized model uses `objective.r`; the plain one uses `r = 0`.
pub fn cmd_toy(cfg: &RunConfig, root: &Path) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.set("sampler.record", "on")?;
    cfg.validate()?;
    let seed = cfg.u64("train.seed")?;
    let mut report = RunReport::new("toy", &cfg, seed);
    let dir = run_dir(root, &report)?;
    let target = cfg.target()?;
    if target.dim() != 3 {
        return Err(Error::Config(format!(
            "toy runs need a 3-dimensional target, got {}",
            target.dim()
        )));
    }
    let data = training_data(&cfg, &target).map_err(context("load training data"))?;
    let data_csv = dir.join("data.csv");
    write_samples(&data_csv, data.view())?;
    report.artifacts.push(data_csv);
    let n_paths = cfg.usize("output.paths")?;
    let r = cfg.get("objective.r").to_string();

    let mut ratios = Vec::new();
    for (name, r) in [("baseline", "0"), ("regularized", r.as_str())] {
        let mut run_cfg = cfg.clone();
        run_cfg.set("objective.r", r)?;
        let (model, history) = train_model(&run_cfg, data.view(), None).map_err(context(format!("train {name}")))?;
        let run = sample_score(&run_cfg, &model).map_err(context(format!("sample {name}")))?;
        let traj = run.trajectories.as_ref().expect("recording forced on");
        let stats = displacement_ratio(traj)?;

        let ckpt = dir.join(format!("checkpoint_{name}.json"));
        Checkpoint::from_model(&model, &report.config_hash).save(&ckpt)?;
        let log = dir.join(format!("train_log_{name}.csv"));
        write_train_log(&log, &history)?;
        let samples = dir.join(format!("samples_{name}.csv"));
        write_samples(&samples, run.finals.view())?;
        let tensor = dir.join(format!("trajectories_{name}.bin"));
        write_trajectories(&tensor, &run)?;
        let paths = dir.join(format!("paths_{name}.csv"));
        write_paths(&paths, traj, n_paths)?;
        report.artifacts.extend([ckpt, log, samples, tensor, paths]);

        report
            .metrics
            .push(MetricRecord::new("displacement_ratio", stats.mean_ratio, seed).param("method", name));
        for (axis, v) in stats.axis_mean.iter().enumerate() {
            report.metrics.push(
                MetricRecord::new("axis_displacement", *v, seed)
                    .param("method", name)
                    .param("axis", axis),
            );
        }
        report
            .metrics
            .push(MetricRecord::new("final_kappa", model.kappa(), seed).param("method", name));
        report.metrics.extend(
            sample_metrics(&run_cfg, &target, run.finals.view())?
                .into_iter()
                .map(|m| m.param("method", name)),
        );
        ratios.push(stats.per_step);
    }

    let disp = dir.join("displacement.csv");
    write_rows_csv(
        &disp,
        &["step", "ratio_baseline", "ratio_regularized"],
        ratios[0]
            .iter()
            .zip(&ratios[1])
            .enumerate()
            .map(|(k, (b, g))| vec![(k + 1).to_string(), b.to_string(), g.to_string()]),
    )?;
    report.artifacts.push(disp);
    if cfg.bool("output.plot")? {
        report.artifacts.push(toy_figure(&dir)?);
    }
    report.write(&dir)?;
    Ok(report)
}

/// Long-format CSV `chain, step, x0, ..` of the first `n` chains.
fn write_paths(path: &Path, traj: &Array3<f64>, n: usize) -> Result<()> {
    let (chains, slices, d) = traj.dim();
    let mut header = vec!["chain".to_string(), "step".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..n.min(chains)).flat_map(|c| {
        (0..slices).map(move |k| {
            let mut row = vec![c.to_string(), k.to_string()];
            row.extend((0..d).map(|j| traj[[c, k, j]].to_string()));
            row
        })
    });
    write_rows_csv(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_ratio() {
        // two chains, two steps, d = 3
        let mut t = Array3::zeros((2, 3, 3));
        // chain 0: step 1 moves (1, 1, 1), step 2 moves (0, 2, 0)
        t[[0, 1, 0]] = 1.0;
        t[[0, 1, 1]] = 1.0;
        t[[0, 1, 2]] = 1.0;
        t[[0, 2, 0]] = 1.0;
        t[[0, 2, 1]] = 3.0;
        t[[0, 2, 2]] = 1.0;
        // chain 1: step 1 moves (-1, 0, 1), step 2 moves (1, -1, 0)
        t[[1, 1, 0]] = -1.0;
        t[[1, 1, 2]] = 1.0;
        t[[1, 2, 0]] = 0.0;
        t[[1, 2, 1]] = -1.0;
        t[[1, 2, 2]] = 1.0;
        let s = displacement_ratio(&t).unwrap();
        // step 1: |dx| = 2, |dy| + |dz| = 3; step 2: |dx| = 1, rest = 3
        assert_eq!(s.per_step, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(s.mean_ratio, 0.5);
        assert_eq!(s.axis_mean, vec![0.75, 1.0, 0.5]);
        assert!(displacement_ratio(&Array3::zeros((2, 1, 3))).is_err());
    }
}
