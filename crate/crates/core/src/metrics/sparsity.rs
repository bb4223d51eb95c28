//! Top-`s` truncation error of the true score.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perturbed_draw, task_rng};
use crate::error::{Error, Result};
use crate::schedule::VeSchedule;
use crate::target::TargetDensity;

/// Range of diffusion times a profile averages over.
///
/// Buckets follow sampling order: the reverse chain starts at `t = 1`, so
/// `Early` covers `t >= 0.5` and `Late` covers `t < 0.5`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    #[default]
    All,
    Early,
    Late,
}

impl TimeBucket {
    /// `(lo, hi)` for times drawn uniformly from `[lo, hi)`.
    pub fn range(self, eps: f64) -> (f64, f64) {
        match self {
            TimeBucket::All => (eps, 1.0),
            TimeBucket::Early => (0.5, 1.0),
            TimeBucket::Late => (eps, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeBucket::All => "all",
            TimeBucket::Early => "early",
            TimeBucket::Late => "late",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub s_levels: Vec<usize>,
    pub bucket: TimeBucket,
    /// Mean squared truncation error per level.
    pub errors: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Squared error of keeping the `s` largest-magnitude entries, for every `s`
/// in `0..=d`. Entry `d` is exactly 0 and the sequence never increases.
pub fn truncation_errors(score: &[f64]) -> Vec<f64> {
    let mut sq: Vec<f64> = score.iter().map(|v| v * v).collect();
    sq.sort_unstable_by(|a, b| b.total_cmp(a));
    let d = sq.len();
    let mut out = vec![0.0; d + 1];
    for s in (0..d).rev() {
        out[s] = out[s + 1] + sq[s];
    }
    out
}

pub fn sparsity_profile<R: Rng + ?Sized>(
    target: &TargetDensity,
    s_levels: &[usize],
    sched: &VeSchedule,
    bucket: TimeBucket,
    n_mc: usize,
    rng: &mut R,
) -> Result<SparsityProfile> {
    let d = target.dim();
    if let Some(s) = s_levels.iter().find(|s| **s == 0 || **s > d) {
        return Err(Error::Domain(format!("sparsity level {s} outside [1, {d}]")));
    }
    if n_mc < 2 {
        return Err(Error::Domain("sparsity profile needs at least 2 draws".into()));
    }
    let (lo, hi) = bucket.range(sched.eps);
    let base: u64 = rng.random();
    let per_draw: Vec<Vec<f64>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(base, i);
            let t = lo + (hi - lo) * rng.random::<f64>();
            let sigma = sched.sigma_unchecked(t);
            let x = perturbed_draw(target, sigma, &mut rng);
            let g = target.true_score(&x, sigma)?;
            let all = truncation_errors(&g);
            Ok(s_levels.iter().map(|&s| all[s]).collect())
        })
        .collect::<Result<_>>()?;
    let mut errors = Vec::with_capacity(s_levels.len());
    let mut stderr = Vec::with_capacity(s_levels.len());
    for k in 0..s_levels.len() {
        let col: Vec<f64> = per_draw.iter().map(|r| r[k]).collect();
        let e = super::Estimate::from_samples(&col);
        errors.push(e.mean);
        stderr.push(e.stderr);
    }
    Ok(SparsityProfile {
        s_levels: s_levels.to_vec(),
        bucket,
        errors,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::DiagGaussian;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> TargetDensity {
        DiagGaussian::new(vec![0.0; 3], vec![0.08, 1.0, 1.0]).unwrap().into()
    }

    #[test]
    fn hand_truncation() {
        assert_eq!(truncation_errors(&[3.0, -1.0, 2.0]), vec![14.0, 5.0, 1.0, 0.0]);
    }

    #[test]
    fn full_level_is_exact_and_levels_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bucket in [TimeBucket::All, TimeBucket::Early, TimeBucket::Late] {
            let p = sparsity_profile(&toy(), &[1, 2, 3], &VeSchedule::default(), bucket, 500, &mut rng).unwrap();
            assert_eq!(p.errors[2], 0.0);
            assert!(p.errors[0] >= p.errors[1] && p.errors[1] >= p.errors[2]);
        }
    }

    #[test]
    fn single_level_bounded_by_mild_coordinates() {
        // at s = 1 the error is at most the two unit-variance coordinates'
        // squared scores, whose mean at level sigma is 2 / (1 + sigma^2)
        let sched = VeSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = sparsity_profile(&toy(), &[1], &sched, TimeBucket::Late, 20_000, &mut rng).unwrap();
        let (lo, hi) = TimeBucket::Late.range(sched.eps);
        let m = 100_000;
        let h = (hi - lo) / m as f64;
        let bound: f64 = (0..m)
            .map(|i| 2.0 / (1.0 + sched.sigma(lo + (i as f64 + 0.5) * h).unwrap().powi(2)))
            .sum::<f64>()
            / m as f64;
        assert!(p.errors[0] <= bound + 3.0 * p.stderr[0], "{} vs {bound}", p.errors[0]);
        assert!(p.errors[0] > 0.0);
    }

    #[test]
    fn rejects_bad_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sched = VeSchedule::default();
        assert!(sparsity_profile(&toy(), &[0], &sched, TimeBucket::All, 10, &mut rng).is_err());
        assert!(sparsity_profile(&toy(), &[4], &sched, TimeBucket::All, 10, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn truncation_is_monotone(v in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let e = truncation_errors(&v);
            prop_assert_eq!(e[v.len()], 0.0);
            for w in e.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
