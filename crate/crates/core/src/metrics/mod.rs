//! Diagnostics against analytic targets.

mod audit;
mod knn;
mod sparsity;
mod tilting;

pub use audit::{bound_audit, AuditConfig, BoundAudit, UnresolvedTerm};
pub use knn::kl_knn;
pub use sparsity::{sparsity_profile, SparsityProfile, TimeBucket};
pub use tilting::{posterior_grid, tilting_residual, tilting_residual_with};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::schedule::VeSchedule;
use crate::score::ScoreFunction;
use crate::target::TargetDensity;

/// One emitted measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub params: BTreeMap<String, Value>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub seed: u64,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, value: f64, seed: u64) -> Self {
        Self {
            metric: metric.into(),
            params: BTreeMap::new(),
            value,
            stderr: None,
            seed,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Independent generator for task `index` of a Monte-Carlo loop.
pub(crate) fn task_rng(base: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng
}

/// A point of the smoothed marginal at level `sigma`: `x0 + sigma z`, `x0 ~ target`.
pub(crate) fn perturbed_draw<R: Rng + ?Sized>(target: &TargetDensity, sigma: f64, rng: &mut R) -> Vec<f64> {
    let x0 = target.sample(1, rng);
    x0.row(0)
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `E ||score(x, t) - grad log q_t(x)||^2` with `t ~ U[eps, 1]` and `x ~ q_t`.
///
/// Each of the `n_t` times averages `n_x` draws; the standard error is taken
/// over the per-time means.
pub fn score_error<S, R>(
    score: &S,
    target: &TargetDensity,
    sched: &VeSchedule,
    n_t: usize,
    n_x: usize,
    rng: &mut R,
) -> Result<Estimate>
where
    S: ScoreFunction + ?Sized,
    R: Rng + ?Sized,
{
    if n_t == 0 || n_x == 0 {
        return Err(Error::Domain("score_error needs n_t, n_x >= 1".into()));
    }
    check_dim(score.dim(), target.dim())?;
    let base: u64 = rng.random();
    let times: Vec<f64> = (0..n_t)
        .map(|_| sched.eps + (1.0 - sched.eps) * rng.random::<f64>())
        .collect();
    let per_t: Vec<f64> = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut rng = task_rng(base, i);
            let sigma = sched.sigma_unchecked(t);
            mean_sq_gap(score, target, t, sigma, n_x, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&per_t))
}

/// Mean of `||score(x, t) - grad log q_t(x)||^2` over `n_x` draws of `q_t`.
pub(crate) fn mean_sq_gap<S, R>(
    score: &S,
    target: &TargetDensity,
    t: f64,
    sigma: f64,
    n_x: usize,
    rng: &mut R,
) -> Result<f64>
where
    S: ScoreFunction + ?Sized,
    R: Rng + ?Sized,
{
    let d = target.dim();
    let mut model = vec![0.0; d];
    let mut exact = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..n_x {
        let x = perturbed_draw(target, sigma, rng);
        score.score_into(&x, t, &mut model);
        target.true_score_into(&x, sigma, &mut exact)?;
        acc += model.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(acc / n_x as f64)
}

fn check_dim(score_dim: usize, target_dim: usize) -> Result<()> {
    if score_dim != target_dim {
        return Err(Error::Shape {
            context: "score dimension",
            expected: target_dim,
            got: score_dim,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{AnalyticScore, ZeroScore};
    use crate::target::{DiagGaussian, GaussianMixture, GaussianUniformProduct, MixtureComponent};

    fn kinds() -> Vec<TargetDensity> {
        let g = DiagGaussian::new(vec![0.5, -1.0], vec![0.08, 2.0]).unwrap();
        let mix = GaussianMixture::new(vec![
            MixtureComponent {
                weight: 0.3,
                gaussian: DiagGaussian::new(vec![-2.0, 0.0], vec![0.5, 0.5]).unwrap(),
            },
            MixtureComponent {
                weight: 0.7,
                gaussian: DiagGaussian::new(vec![1.0, 1.0], vec![0.2, 1.0]).unwrap(),
            },
        ])
        .unwrap();
        let prod = GaussianUniformProduct::from_parts(2, &[0], &[0.0], &[1.0], &[(0.0, 1.0)]).unwrap();
        vec![g.into(), mix.into(), prod.into()]
    }

    #[test]
    fn exact_score_has_zero_error() {
        let sched = VeSchedule::default();
        for target in kinds() {
            let oracle = AnalyticScore::new(&target, sched);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let e = score_error(&oracle, &target, &sched, 20, 10, &mut rng).unwrap();
            assert_eq!(e.mean, 0.0, "{}", target.kind());
        }
    }

    #[test]
    fn zero_score_matches_closed_form_average() {
        // E ||x / (1 + sigma_t^2)||^2 = d / (1 + sigma_t^2) for a standard Gaussian
        let sched = VeSchedule::default();
        let target: TargetDensity = DiagGaussian::standard(3).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = score_error(&ZeroScore(3), &target, &sched, 4000, 8, &mut rng).unwrap();
        // midpoint quadrature over [eps, 1]
        let m = 200_000;
        let h = (1.0 - sched.eps) / m as f64;
        let quad: f64 = (0..m)
            .map(|i| {
                let t = sched.eps + (i as f64 + 0.5) * h;
                3.0 / (1.0 + sched.sigma(t).unwrap().powi(2))
            })
            .sum::<f64>()
            * h
            / (1.0 - sched.eps);
        assert!((e.mean - quad).abs() < 4.0 * e.stderr, "{e:?} vs {quad}");
    }

    #[test]
    fn rejects_mismatched_dimension() {
        let sched = VeSchedule::default();
        let target: TargetDensity = DiagGaussian::standard(3).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(score_error(&ZeroScore(2), &target, &sched, 2, 2, &mut rng).is_err());
        assert!(score_error(&ZeroScore(3), &target, &sched, 0, 2, &mut rng).is_err());
    }

    #[test]
    fn record_serializes_flat() {
        let r = MetricRecord::new("kl_knn", 0.25, 3).with_stderr(0.01).param("k", 5);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["metric"], "kl_knn");
        assert_eq!(json["params"]["k"], 5);
        assert_eq!(json["seed"], 3);
        let back: MetricRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
