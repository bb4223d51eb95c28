//! Effective score functions `(x, t) -> R^d`.
//!
//! Samplers and metrics only see this trait, so a trained model and an
//! analytic oracle are interchangeable.

use crate::schedule::VeSchedule;
use crate::target::TargetDensity;

pub trait ScoreFunction: Sync {
    fn dim(&self) -> usize;

    /// Writes the score at `(x, t)` into `out`; `t` lies in `(0, 1]`.
    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, t, &mut out);
        out
    }
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).score_into(x, t, out)
    }
}

/// Exact score of a target perturbed to level `sigma_t` of a VE schedule.
#[derive(Clone, Debug)]
pub struct AnalyticScore<'a> {
    pub target: &'a TargetDensity,
    pub schedule: VeSchedule,
}

impl<'a> AnalyticScore<'a> {
    pub fn new(target: &'a TargetDensity, schedule: VeSchedule) -> Self {
        Self { target, schedule }
    }
}

impl ScoreFunction for AnalyticScore<'_> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let sigma = self.schedule.sigma_unchecked(t);
        self.target
            .true_score_into(x, sigma, out)
            .expect("analytic score query shapes are fixed by the caller");
    }
}

/// The zero vector field.
#[derive(Clone, Copy, Debug)]
pub struct ZeroScore(pub usize);

impl ScoreFunction for ZeroScore {
    fn dim(&self) -> usize {
        self.0
    }

    fn score_into(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Adapts a closure `(x, t, out)` into a [`ScoreFunction`].
pub struct FnScore<F> {
    dim: usize,
    f: F,
}

impl<F> FnScore<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScoreFunction for FnScore<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
}
