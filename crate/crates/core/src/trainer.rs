//! Minibatch training with Adam, optional l1 projection and a trainable scale.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{dsm_grad, DsmBatch, LossBreakdown, Weighting};
use crate::schedule::VeSchedule;
use crate::scorenet::{NetConfig, ScoreModel};

/// Lower clamp applied to `kappa` after every update.
pub const KAPPA_FLOOR: f64 = 1e-6;

const INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the `kappa^2` penalty.
    pub r: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Smallest training time.
    pub eps: f64,
    pub seed: u64,
    /// Project the parameters onto the l1 ball after each step.
    pub projection: bool,
    pub kappa_init: f64,
    pub kappa_trainable: bool,
    pub weighting: Weighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            r: 0.001,
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.001,
            eps: 1e-5,
            seed: 0,
            projection: true,
            kappa_init: 1.0,
            kappa_trainable: true,
            weighting: Weighting::None,
        }
    }
}

impl TrainConfig {
    /// Plain denoising score matching: no penalty, no projection, `kappa = 1` fixed.
    pub fn baseline(&self) -> Self {
        Self {
            r: 0.0,
            projection: false,
            kappa_init: 1.0,
            kappa_trainable: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.eps > 0.0 && self.eps < 0.01) {
            return Err(Error::Config(format!(
                "train.eps must lie in (0, 0.01), got {}",
                self.eps
            )));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::Config(format!(
                "objective.r must be non-negative, got {}",
                self.r
            )));
        }
        if !(self.kappa_init > 0.0) || !self.kappa_init.is_finite() {
            return Err(Error::Config(format!(
                "train.kappa_init must be positive, got {}",
                self.kappa_init
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, hp: AdamParams) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape {
            context: "adam state",
            expected: params.len(),
            got: grads.len().min(state.m.len()).min(state.v.len()),
        });
    }
    state.step += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.step as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: LossBreakdown,
    /// `kappa` after the update.
    pub kappa: f64,
    /// l1 norm of the parameters after the update (and projection).
    pub param_l1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    /// `kappa` at the end of each epoch.
    pub kappa_trace: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn final_kappa(&self) -> Option<f64> {
        self.kappa_trace.last().copied()
    }

    /// Mean fit term over the steps of one epoch (1-based).
    pub fn epoch_fit(&self, epoch: usize) -> Option<f64> {
        let fits: Vec<f64> = self
            .steps
            .iter()
            .filter(|s| s.epoch == epoch)
            .map(|s| s.loss.fit_term)
            .collect();
        (!fits.is_empty()).then(|| fits.iter().sum::<f64>() / fits.len() as f64)
    }
}

/// Steps taken per epoch for `n` rows.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Model with the configured initial scale, projected if projection is on.
pub fn init_model(dim: usize, cfg: &TrainConfig, arch: &NetConfig) -> Result<ScoreModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let mut model = ScoreModel::new(dim, arch.clone(), cfg.kappa_init, &mut rng)?;
    if cfg.projection {
        model.project();
    }
    Ok(model)
}

pub fn train(
    data: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    sched: &VeSchedule,
    arch: &NetConfig,
) -> Result<(ScoreModel, TrainHistory)> {
    train_with(data, cfg, sched, arch, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch(epoch, model)` after every epoch.
pub fn train_with<F>(
    data: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    sched: &VeSchedule,
    arch: &NetConfig,
    mut on_epoch: F,
) -> Result<(ScoreModel, TrainHistory)>
where
    F: FnMut(usize, &ScoreModel) -> Result<()>,
{
    cfg.validate()?;
    arch.validate()?;
    let (n, d) = data.dim();
    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "need at least batch_size = {} rows, got {n}",
            cfg.batch_size
        )));
    }
    let mut model = init_model(d, cfg, arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(BATCH_STREAM);

    let hp = AdamParams::default();
    let mut theta_state = AdamState::new(model.param_count());
    let mut kappa_state = AdamState::new(1);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    let per_epoch = steps_per_epoch(n, cfg.batch_size);
    history.steps.reserve(cfg.epochs * per_epoch);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for (step, rows) in order.chunks(cfg.batch_size).enumerate() {
            let x0: Array2<f64> = data.select(Axis(0), rows);
            let t: Array1<f64> = (0..rows.len())
                .map(|_| rng.random::<f64>() * (1.0 - cfg.eps) + cfg.eps)
                .collect();
            let noise = Array2::from_shape_simple_fn((rows.len(), d), || rng.sample(StandardNormal));
            let batch = DsmBatch {
                x0: x0.view(),
                t: t.as_slice().expect("contiguous"),
                noise: noise.view(),
            };
            let (grad, loss) = dsm_grad(&model, &batch, sched, cfg.r, cfg.weighting)?;
            if !loss.total.is_finite() || !grad.d_kappa.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    kappa: model.kappa(),
                    batch_rows: rows.to_vec(),
                });
            }
            adam_step(
                model.params_mut(),
                &grad.d_params,
                &mut theta_state,
                cfg.learning_rate,
                hp,
            )?;
            if cfg.kappa_trainable {
                let mut kappa = [model.kappa()];
                adam_step(&mut kappa, &[grad.d_kappa], &mut kappa_state, cfg.learning_rate, hp)?;
                model.set_kappa(kappa[0].max(KAPPA_FLOOR));
            }
            if cfg.projection {
                model.project();
            }
            history.steps.push(StepRecord {
                epoch,
                step,
                loss,
                kappa: model.kappa(),
                param_l1: model.l1_norm(),
            });
        }
        history.kappa_trace.push(model.kappa());
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        on_epoch(epoch, &model)?;
    }
    Ok((model, history))
}
