//! Tilting-factor identity for a 1D Gaussian under a discrete schedule.
//!
//! With `q_t = N(sqrt(ab_t) mu, ab_t v + 1 - ab_t)` the reverse posterior
//! `q_{t-1|t}(. | x_t)` is Gaussian. The score-driven kernel is
//! `p_{t-1|t} = N(u_t, (1 - a_t) / a_t)` with
//! `u_t = (x_t + (1 - a_t) s) / sqrt(a_t)` and the tilt is
//! `zeta(x') = log q_{t-1}(x') - sqrt(a_t) x' grad log q_t(x_t)`.
//! When `s` is the exact score, `log q_{t-1|t} - log p_{t-1|t} - zeta` is
//! constant in `x'`.

use crate::error::{Error, Result};
use crate::schedule::DiscreteSchedule;
use crate::target::{gaussian_log_pdf, DiagGaussian};

struct Marginals {
    alpha: f64,
    /// `q_{t-1}` mean and variance.
    prev: (f64, f64),
    /// `q_t` mean and variance.
    cur: (f64, f64),
}

fn marginals(target: &DiagGaussian, sched: &DiscreteSchedule, t: usize) -> Result<Marginals> {
    if target.dim() != 1 {
        return Err(Error::Shape {
            context: "tilting target",
            expected: 1,
            got: target.dim(),
        });
    }
    let alpha = sched.alpha(t)?;
    let (mu, v) = (target.mean()[0], target.var()[0]);
    let at = |ab: f64| (ab.sqrt() * mu, ab * v + 1.0 - ab);
    Ok(Marginals {
        alpha,
        prev: at(sched.alpha_bar_at(t - 1)?),
        cur: at(sched.alpha_bar_at(t)?),
    })
}

/// Posterior `q_{t-1|t}(. | x_t)` as `(mean, variance)`.
fn posterior(m: &Marginals, x_t: f64) -> (f64, f64) {
    let (pm, pv) = m.prev;
    let noise = 1.0 - m.alpha;
    let precision = 1.0 / pv + m.alpha / noise;
    let mean = (pm / pv + m.alpha.sqrt() * x_t / noise) / precision;
    (mean, 1.0 / precision)
}

/// `points` evenly spaced values spanning `+- width` posterior standard
/// deviations around the posterior mean.
pub fn posterior_grid(
    target: &DiagGaussian,
    sched: &DiscreteSchedule,
    t: usize,
    x_t: f64,
    points: usize,
    width: f64,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Domain("grid needs at least 2 points".into()));
    }
    let (mean, var) = posterior(&marginals(target, sched, t)?, x_t);
    let sd = var.sqrt();
    Ok((0..points)
        .map(|i| mean + sd * width * (2.0 * i as f64 / (points - 1) as f64 - 1.0))
        .collect())
}

/// Variation `max - min` of the identity residual over `grid` with the exact score.
pub fn tilting_residual(
    target: &DiagGaussian,
    sched: &DiscreteSchedule,
    t: usize,
    grid: &[f64],
    x_t: f64,
) -> Result<f64> {
    tilting_residual_with(target, sched, t, grid, x_t, 0.0)
}

/// As [`tilting_residual`], with `shift` added to the score used by the
/// score-driven kernel only.
pub fn tilting_residual_with(
    target: &DiagGaussian,
    sched: &DiscreteSchedule,
    t: usize,
    grid: &[f64],
    x_t: f64,
    shift: f64,
) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Domain("grid needs at least 2 points".into()));
    }
    let m = marginals(target, sched, t)?;
    let (post_mean, post_var) = posterior(&m, x_t);
    let exact = -(x_t - m.cur.0) / m.cur.1;
    let model = exact + shift;
    let kernel_mean = (x_t + (1.0 - m.alpha) * model) / m.alpha.sqrt();
    let kernel_var = (1.0 - m.alpha) / m.alpha;
    let residuals = grid.iter().map(|&x| {
        let zeta = gaussian_log_pdf(x, m.prev.0, m.prev.1) - m.alpha.sqrt() * x * exact;
        gaussian_log_pdf(x, post_mean, post_var) - gaussian_log_pdf(x, kernel_mean, kernel_var) - zeta
    });
    let (lo, hi) = residuals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(hi - lo)
}
