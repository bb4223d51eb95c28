//! Annealed Langevin sampling on a descending time grid, plus the discrete
//! reverse-mean step.
//!
//! Every chain owns a ChaCha stream `(seed, chain index)`, so results do not
//! depend on how chains are scheduled across threads.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{DiscreteSchedule, VeSchedule};
use crate::score::ScoreFunction;

/// How the step size at grid time `t` is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepMode {
    /// `x += eta * score + sqrt(2 eta) z` with the fixed grid spacing `eta`.
    #[default]
    Langevin,
    /// Per-chain step `2 (snr ||z|| / ||score||)^2`, recomputed every update.
    Snr { snr: f64 },
    /// Euler-Maruyama on the reverse VE diffusion:
    /// `x += eta g_t^2 score + sqrt(eta g_t^2) z` with `g_t^2 = sigma^(2t)`.
    ReverseSde,
}

impl StepMode {
    pub fn name(&self) -> &'static str {
        match self {
            StepMode::Langevin => "langevin",
            StepMode::Snr { .. } => "snr",
            StepMode::ReverseSde => "reverse_sde",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub chains: usize,
    pub eps: f64,
    pub seed: u64,
    /// Keep every intermediate state.
    pub record: bool,
    pub mode: StepMode,
    /// Off gives the deterministic zero-temperature iteration.
    pub noise: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 60,
            chains: 1000,
            eps: 1e-5,
            seed: 0,
            record: false,
            mode: StepMode::Langevin,
            noise: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!(
                "sampler.steps must be at least 2, got {}",
                self.steps
            )));
        }
        if self.chains == 0 {
            return Err(Error::Config("sampler.chains must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!(
                "sampler.eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if let StepMode::Snr { snr } = self.mode {
            if !(snr > 0.0) || !snr.is_finite() {
                return Err(Error::Config(format!("sampler.snr must be positive, got {snr}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    pub steps: usize,
    pub eps: f64,
    /// Grid spacing `t[0] - t[1]`.
    pub eta: f64,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub mode: StepMode,
    /// `chains x d`.
    pub finals: Array2<f64>,
    /// `chains x (steps + 1) x d`; slice 0 is the initial state.
    pub trajectories: Option<Array3<f64>>,
}

impl SampleRun {
    pub fn chains(&self) -> usize {
        self.finals.nrows()
    }
}

/// `steps` evenly spaced times from 1 down to `eps`, both ends included.
pub fn time_grid(steps: usize, eps: f64) -> Vec<f64> {
    let h = (1.0 - eps) / (steps - 1) as f64;
    (0..steps)
        .map(|i| if i + 1 == steps { eps } else { 1.0 - i as f64 * h })
        .collect()
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub fn langevin_sample<S: ScoreFunction + ?Sized>(
    score: &S,
    sched: &VeSchedule,
    cfg: &SamplerConfig,
) -> Result<SampleRun> {
    cfg.validate()?;
    let d = score.dim();
    let grid = time_grid(cfg.steps, cfg.eps);
    let eta = grid[0] - grid[1];
    let sigma_1 = sched.sigma(1.0)?;

    let per_chain: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(cfg.seed, chain);
            let mut x: Vec<f64> = (0..d).map(|_| sigma_1 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut path = Vec::new();
            if cfg.record {
                path.reserve(d * (cfg.steps + 1));
                path.extend_from_slice(&x);
            }
            let mut s = vec![0.0; d];
            let mut z = vec![0.0; d];
            for (step, &t) in grid.iter().enumerate() {
                score.score_into(&x, t, &mut s);
                z.iter_mut().for_each(|zi| *zi = rng.sample(StandardNormal));
                let (drift, spread) = match cfg.mode {
                    StepMode::Langevin => (eta, (2.0 * eta).sqrt()),
                    StepMode::Snr { snr } => {
                        let sn = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let h = if sn > 0.0 { 2.0 * (snr * zn / sn).powi(2) } else { eta };
                        (h, (2.0 * h).sqrt())
                    }
                    StepMode::ReverseSde => {
                        let g2 = sched.diffusion_sq(t);
                        (eta * g2, (eta * g2).sqrt())
                    }
                };
                let spread = if cfg.noise { spread } else { 0.0 };
                for ((xi, si), zi) in x.iter_mut().zip(&s).zip(&z) {
                    *xi += drift * si + spread * zi;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteChain { chain, step });
                }
                if cfg.record {
                    path.extend_from_slice(&x);
                }
            }
            Ok((x, path))
        })
        .collect();

    let mut finals = Array2::zeros((cfg.chains, d));
    let mut trajectories = cfg.record.then(|| Array3::zeros((cfg.chains, cfg.steps + 1, d)));
    for (chain, res) in per_chain.into_iter().enumerate() {
        let (x, path) = res?;
        finals.row_mut(chain).iter_mut().zip(&x).for_each(|(o, v)| *o = *v);
        if let Some(tr) = trajectories.as_mut() {
            tr.index_axis_mut(ndarray::Axis(0), chain)
                .iter_mut()
                .zip(&path)
                .for_each(|(o, v)| *o = *v);
        }
    }
    Ok(SampleRun {
        steps: cfg.steps,
        eps: cfg.eps,
        eta,
        grid,
        seed: cfg.seed,
        mode: cfg.mode,
        finals,
        trajectories,
    })
}

/// Mean of the one-step reverse transition:
/// `(x_t + (1 - alpha_t) score) / sqrt(alpha_t)`.
pub fn reverse_mean(x_t: &[f64], score_value: &[f64], sched: &DiscreteSchedule, t: usize) -> Result<Vec<f64>> {
    if x_t.len() != score_value.len() {
        return Err(Error::Shape {
            context: "reverse mean score",
            expected: x_t.len(),
            got: score_value.len(),
        });
    }
    let alpha = sched.alpha(t)?;
    Ok(reverse_mean_with(x_t, score_value, alpha))
}

pub(crate) fn reverse_mean_with(x_t: &[f64], score_value: &[f64], alpha: f64) -> Vec<f64> {
    let root = alpha.sqrt();
    x_t.iter()
        .zip(score_value)
        .map(|(x, s)| (x + (1.0 - alpha) * s) / root)
        .collect()
}

/// Runs the discrete reverse chain from `t = T` to `t = 1`:
/// `x_{t-1} = u_t(x_t) + sqrt((1 - alpha_t) / alpha_t) z`.
///
/// `score(x, t, out)` must give the score of the step-`t` marginal.
pub fn discrete_reverse_sample<F>(score: F, sched: &DiscreteSchedule, init: &Array2<f64>, seed: u64) -> Array2<f64>
where
    F: Fn(&[f64], usize, &mut [f64]) + Sync,
{
    let (n, d) = init.dim();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(seed, chain);
            let mut x = init.row(chain).to_vec();
            let mut s = vec![0.0; d];
            for t in (1..=sched.steps()).rev() {
                let alpha = sched.alphas()[t - 1];
                score(&x, t, &mut s);
                x = reverse_mean_with(&x, &s, alpha);
                let spread = ((1.0 - alpha) / alpha).sqrt();
                x.iter_mut()
                    .for_each(|xi| *xi += spread * rng.sample::<f64, _>(StandardNormal));
            }
            x
        })
        .collect();
    Array2::from_shape_fn((n, d), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{FnScore, ZeroScore};
    use approx::assert_relative_eq;

    #[test]
    fn grid_is_linear_and_exact_at_ends() {
        let g = time_grid(60, 1e-5);
        assert_eq!(g.len(), 60);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[59], 1e-5);
        let eta = (1.0 - 1e-5) / 59.0;
        assert_relative_eq!(g[0] - g[1], eta, max_relative = 1e-14);
        for w in g.windows(2) {
            assert_relative_eq!(w[0] - w[1], eta, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_update_by_hand() {
        // with steps = 2 the first update happens at t = 1
        let v = [0.7, -1.3];
        let sched = VeSchedule::default();
        let cfg = SamplerConfig {
            steps: 2,
            chains: 1,
            seed: 9,
            record: true,
            ..Default::default()
        };
        let score = FnScore::new(2, |_x: &[f64], t: f64, out: &mut [f64]| {
            if t == 1.0 {
                out.copy_from_slice(&v)
            } else {
                out.iter_mut().for_each(|o| *o = 0.0)
            }
        });
        let run = langevin_sample(&score, &sched, &cfg).unwrap();
        let mut rng = chain_rng(9, 0);
        let sigma_1 = sched.sigma(1.0).unwrap();
        let x0: Vec<f64> = (0..2).map(|_| sigma_1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let z: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let tr = run.trajectories.unwrap();
        for j in 0..2 {
            assert_eq!(tr[[0, 0, j]], x0[j]);
            let want = x0[j] + run.eta * v[j] + (2.0 * run.eta).sqrt() * z[j];
            assert_relative_eq!(tr[[0, 1, j]], want, max_relative = 1e-14);
        }
    }

    #[test]
    fn recording_does_not_perturb_chains() {
        let sched = VeSchedule::default();
        let base = SamplerConfig {
            steps: 20,
            chains: 17,
            seed: 4,
            ..Default::default()
        };
        let score = FnScore::new(2, |x: &[f64], _t: f64, out: &mut [f64]| {
            out.iter_mut().zip(x).for_each(|(o, v)| *o = -v)
        });
        let a = langevin_sample(&score, &sched, &base).unwrap();
        let b = langevin_sample(
            &score,
            &sched,
            &SamplerConfig {
                record: true,
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(a.finals, b.finals);
        let tr = b.trajectories.unwrap();
        for c in 0..17 {
            for j in 0..2 {
                assert_eq!(tr[[c, 20, j]], b.finals[[c, j]]);
            }
        }
    }

    #[test]
    fn non_finite_chain_is_reported() {
        let sched = VeSchedule::default();
        let score = FnScore::new(1, |_x: &[f64], t: f64, out: &mut [f64]| {
            out[0] = if t < 0.5 { f64::NAN } else { 0.0 }
        });
        let cfg = SamplerConfig {
            steps: 11,
            chains: 3,
            ..Default::default()
        };
        match langevin_sample(&score, &sched, &cfg) {
            Err(Error::NonFiniteChain { chain: 0, step }) => assert_eq!(step, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_temperature_contracts_toward_mode() {
        let sched = VeSchedule::default();
        let cfg = SamplerConfig {
            steps: 50,
            chains: 4,
            record: true,
            noise: false,
            ..Default::default()
        };
        // exact score of N(0, 1) smoothed to level sigma_t
        let score = FnScore::new(2, |x: &[f64], t: f64, out: &mut [f64]| {
            let var = 1.0 + VeSchedule::default().sigma(t).unwrap().powi(2);
            out.iter_mut().zip(x).for_each(|(o, v)| *o = -v / var)
        });
        let run = langevin_sample(&score, &sched, &cfg).unwrap();
        let tr = run.trajectories.unwrap();
        for c in 0..4 {
            let norms: Vec<f64> = (0..=50)
                .map(|k| (tr[[c, k, 0]].powi(2) + tr[[c, k, 1]].powi(2)).sqrt())
                .collect();
            assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
        }
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let sched = VeSchedule::default();
        let cfg = SamplerConfig {
            steps: 10,
            chains: 33,
            seed: 5,
            ..Default::default()
        };
        let a = langevin_sample(&ZeroScore(3), &sched, &cfg).unwrap();
        let b = langevin_sample(&ZeroScore(3), &sched, &cfg).unwrap();
        assert_eq!(a, b);
        let c = langevin_sample(&ZeroScore(3), &sched, &SamplerConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.finals, c.finals);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SamplerConfig {
                steps: 1,
                ..Default::default()
            },
            SamplerConfig {
                chains: 0,
                ..Default::default()
            },
            SamplerConfig {
                eps: 0.0,
                ..Default::default()
            },
            SamplerConfig {
                mode: StepMode::Snr { snr: 0.0 },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn reverse_mean_examples() {
        // alpha = 1 is outside a schedule's range, so check the closed form
        assert_eq!(reverse_mean_with(&[0.3, -2.0], &[5.0, 5.0], 1.0), vec![0.3, -2.0]);
        let sched = DiscreteSchedule::from_alphas(vec![0.96]).unwrap();
        let u = reverse_mean(&[1.0], &[-1.0], &sched, 1).unwrap();
        assert_relative_eq!(u[0], 0.96 / 0.96f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(u[0], 0.979_796, epsilon = 1e-6);
        assert!(reverse_mean(&[1.0], &[-1.0], &sched, 2).is_err());
        assert!(reverse_mean(&[1.0], &[-1.0, 0.0], &sched, 1).is_err());
    }

    #[test]
    fn discrete_chain_recovers_gaussian_variance() {
        let (mu, v) = (0.5, 2.0);
        let sched = DiscreteSchedule::make(200, 1.0).unwrap();
        let marginal = |t: usize| {
            let ab = sched.alpha_bar_at(t).unwrap();
            (ab.sqrt() * mu, ab * v + 1.0 - ab)
        };
        let (m_top, v_top) = marginal(200);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let init = Array2::from_shape_simple_fn((20_000, 1), || {
            m_top + v_top.sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        let out = discrete_reverse_sample(
            |x, t, s| {
                let (m, var) = marginal(t);
                s[0] = -(x[0] - m) / var;
            },
            &sched,
            &init,
            3,
        );
        let mean = out.mean().unwrap();
        let var = out.var(1.0);
        assert!((var - v).abs() < 0.1 * v, "variance {var}");
        assert!((mean - mu).abs() < 0.1, "mean {mean}");
    }
}
