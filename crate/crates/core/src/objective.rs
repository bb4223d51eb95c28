//! Scale-regularized denoising score matching loss.
//!
//! For a batch of clean rows `x0_i`, times `t_i` and standard normal draws
//! `z_i`, the perturbed points are `x_i = x0_i + sigma_{t_i} z_i` and the
//! regression target is the conditional score `-z_i / sigma_{t_i}`:
//!
//! ```text
//! f(kappa, params) = 1/b sum_i w(t_i) || kappa s(x_i, t_i) + z_i / sigma_{t_i} ||^2 + r kappa^2
//! ```
//!
//! with `w = 1` (unweighted) or `w = sigma_t^2`.
//!
//! Rows are processed in fixed-size chunks that may run on different threads;
//! chunk partials are combined in a fixed order, so the result does not depend
//! on the thread count.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::VeSchedule;
use crate::scorenet::{GradientBundle, ScoreModel};

const CHUNK_ROWS: usize = 16;

/// Per-row loss weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    None,
    Sigma2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean squared score-matching residual.
    pub fit_term: f64,
    /// `r * kappa^2`.
    pub reg_term: f64,
    pub r: f64,
}

/// One minibatch with its time and noise draws.
#[derive(Clone, Copy, Debug)]
pub struct DsmBatch<'a> {
    pub x0: ArrayView2<'a, f64>,
    pub t: &'a [f64],
    pub noise: ArrayView2<'a, f64>,
}

impl DsmBatch<'_> {
    fn validate(&self, model: &ScoreModel, sched: &VeSchedule) -> Result<()> {
        let (b, d) = self.x0.dim();
        if d != model.dim() {
            return Err(Error::Shape {
                context: "batch width",
                expected: model.dim(),
                got: d,
            });
        }
        if self.t.len() != b {
            return Err(Error::Shape {
                context: "batch times",
                expected: b,
                got: self.t.len(),
            });
        }
        if self.noise.dim() != (b, d) {
            return Err(Error::Shape {
                context: "batch noise",
                expected: b * d,
                got: self.noise.len(),
            });
        }
        if b == 0 {
            return Err(Error::Domain("empty batch".into()));
        }
        if let Some(t) = self.t.iter().find(|t| !(**t >= sched.eps && **t <= 1.0)) {
            return Err(Error::Domain(format!("batch time {t} outside [eps, 1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

struct ChunkResult {
    fit_sum: f64,
    grad: Option<GradientBundle>,
}

fn evaluate(
    model: &ScoreModel,
    batch: &DsmBatch<'_>,
    sched: &VeSchedule,
    weighting: Weighting,
    with_grad: bool,
) -> Vec<ChunkResult> {
    let b = batch.len();
    let d = model.dim();
    let kappa = model.kappa();
    let inv_b = 1.0 / b as f64;
    let n_chunks = b.div_ceil(CHUNK_ROWS);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut ws = model.workspace();
            let mut grad = with_grad.then(|| GradientBundle::zeros(model.param_count()));
            let mut x_t = vec![0.0; d];
            let mut residual = vec![0.0; d];
            let mut fit_sum = 0.0;
            for i in c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(b) {
                let t = batch.t[i];
                let sigma = sched.sigma_unchecked(t);
                let weight = match weighting {
                    Weighting::None => 1.0,
                    Weighting::Sigma2 => sigma * sigma,
                };
                let x0 = batch.x0.row(i);
                let z = batch.noise.row(i);
                for ((xt, a), zi) in x_t.iter_mut().zip(x0.iter()).zip(z.iter()) {
                    *xt = a + sigma * zi;
                }
                let s = model.forward_ws(&x_t, t, &mut ws);
                // target = -z / sigma
                let mut sq = 0.0;
                for ((r, si), zi) in residual.iter_mut().zip(s).zip(z.iter()) {
                    *r = kappa * si + zi / sigma;
                    sq += *r * *r;
                }
                fit_sum += weight * sq;
                if let Some(g) = grad.as_mut() {
                    let scale = 2.0 * weight * inv_b;
                    residual.iter_mut().for_each(|r| *r *= scale);
                    g.d_kappa += model.backward_ws(&mut ws, &residual, &mut g.d_params);
                }
            }
            ChunkResult { fit_sum, grad }
        })
        .collect()
}

/// Pairwise summation in a fixed tree order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn breakdown(fit_sums: &[f64], b: usize, kappa: f64, r: f64) -> LossBreakdown {
    let fit_term = pairwise_sum(fit_sums) / b as f64;
    let reg_term = r * kappa * kappa;
    LossBreakdown {
        total: fit_term + reg_term,
        fit_term,
        reg_term,
        r,
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!(
            "tuning parameter r must be non-negative, got {r}"
        )));
    }
    Ok(())
}

/// Loss of `model` on one batch.
pub fn dsm_loss(
    model: &ScoreModel,
    batch: &DsmBatch<'_>,
    sched: &VeSchedule,
    r: f64,
    weighting: Weighting,
) -> Result<LossBreakdown> {
    check_r(r)?;
    batch.validate(model, sched)?;
    let chunks = evaluate(model, batch, sched, weighting, false);
    let sums: Vec<f64> = chunks.iter().map(|c| c.fit_sum).collect();
    Ok(breakdown(&sums, batch.len(), model.kappa(), r))
}

/// Loss and its exact gradient with respect to the parameters and `kappa`.
pub fn dsm_grad(
    model: &ScoreModel,
    batch: &DsmBatch<'_>,
    sched: &VeSchedule,
    r: f64,
    weighting: Weighting,
) -> Result<(GradientBundle, LossBreakdown)> {
    check_r(r)?;
    batch.validate(model, sched)?;
    let chunks = evaluate(model, batch, sched, weighting, true);
    let sums: Vec<f64> = chunks.iter().map(|c| c.fit_sum).collect();
    let loss = breakdown(&sums, batch.len(), model.kappa(), r);
    let mut grads = chunks.into_iter().map(|c| c.grad.expect("gradient requested"));
    let mut total = grads.next().expect("batch is non-empty");
    for g in grads {
        total.add_assign(&g);
    }
    total.d_kappa += 2.0 * r * model.kappa();
    Ok((total, loss))
}
