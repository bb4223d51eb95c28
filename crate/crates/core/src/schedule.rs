//! Forward-process noise schedules.
//!
//! Two families live here. [`VeSchedule`] is the continuous variance-exploding
//! curve used for training and sampling: `x_t = x_0 + sigma_t * z` with
//!
//! ```text
//! sigma_t^2 = (sigma^(2t) - 1) / (2 ln sigma),   t in (0, 1]
//! ```
//!
//! [`DiscreteSchedule`] is the variance-preserving chain
//! `x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) w_t` used by the theory
//! audits. Its constructor picks the constant step `1 - alpha_t = c ln(T) / T`,
//! which meets the step-size bound with equality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous variance-exploding schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VeSchedule {
    pub sigma_max: f64,
    /// Smallest time used by training and sampling.
    pub eps: f64,
}

impl Default for VeSchedule {
    fn default() -> Self {
        Self {
            sigma_max: 25.0,
            eps: 1e-5,
        }
    }
}

impl VeSchedule {
    pub fn new(sigma_max: f64, eps: f64) -> Result<Self> {
        if !(sigma_max > 1.0) || !sigma_max.is_finite() {
            return Err(Error::Domain(format!("sigma_max must exceed 1, got {sigma_max}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(Self { sigma_max, eps })
    }

    /// Noise standard deviation `sigma_t`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        ve_sigma(self.sigma_max, t)
    }

    /// `sigma_t^2` without the domain check; callers guarantee `t in (0, 1]`.
    #[inline]
    pub(crate) fn sigma_sq_unchecked(&self, t: f64) -> f64 {
        let log_sigma = self.sigma_max.ln();
        (2.0 * t * log_sigma).exp_m1() / (2.0 * log_sigma)
    }

    #[inline]
    pub(crate) fn sigma_unchecked(&self, t: f64) -> f64 {
        self.sigma_sq_unchecked(t).sqrt()
    }

    /// Squared diffusion coefficient `g_t^2 = d sigma_t^2 / dt = sigma^(2t)`.
    pub fn diffusion_sq(&self, t: f64) -> f64 {
        self.sigma_max.powf(2.0 * t)
    }
}

/// `sqrt((sigma^(2t) - 1) / (2 ln sigma))` for `t in (0, 1]`, `sigma > 1`.
pub fn ve_sigma(sigma_max: f64, t: f64) -> Result<f64> {
    if !(sigma_max > 1.0) || !sigma_max.is_finite() {
        return Err(Error::Domain(format!("sigma_max must exceed 1, got {sigma_max}")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1], got {t}")));
    }
    let log_sigma = sigma_max.ln();
    // exp_m1 keeps full precision for t near 0
    Ok(((2.0 * t * log_sigma).exp_m1() / (2.0 * log_sigma)).sqrt())
}

/// Discrete variance-preserving schedule with `T` steps.
///
/// Vectors are indexed from step 1: `beta[t - 1]` is `beta_t`. `alpha_bar`
/// carries the empty product at index 0, so `alpha_bar[t]` is `alpha_bar_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    c: f64,
}

impl DiscreteSchedule {
    /// Constant schedule `beta_t = c ln(T) / T`.
    pub fn make(steps: usize, c: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Domain(format!("need at least 2 steps, got {steps}")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("schedule constant must be positive, got {c}")));
        }
        let beta = c * (steps as f64).ln() / steps as f64;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!(
                "c ln(T)/T = {beta} is not a valid noise level in (0, 1)"
            )));
        }
        let mut sched = Self::from_alphas(vec![1.0 - beta; steps])?;
        // 1 - (1 - beta) can round above beta
        sched.beta = vec![beta; steps];
        sched.c = c;
        Ok(sched)
    }

    /// Schedule from explicit retention factors `alpha_1..alpha_T`.
    ///
    /// The schedule constant is set to the smallest `c` for which the step
    /// bound holds.
    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Domain("empty schedule".into()));
        }
        if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Domain(format!("alpha_t = {bad} outside (0, 1)")));
        }
        let beta: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let steps = alpha.len() as f64;
        let max_beta = beta.iter().copied().fold(0.0, f64::max);
        let c = if steps > 1.0 {
            max_beta * steps / steps.ln()
        } else {
            f64::INFINITY
        };
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            c,
        })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// `alpha_t` for `1 <= t <= T`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index {
                index: t,
                lo: 1,
                hi: self.steps(),
            });
        }
        Ok(self.alpha[t - 1])
    }

    /// Cumulative product `prod_{i <= t} alpha_i`; 1 at `t = 0`.
    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::Index {
            index: t,
            lo: 0,
            hi: self.steps(),
        })
    }

    /// The step bound `c ln(T) / T` this schedule was built against.
    pub fn step_bound(&self) -> f64 {
        let steps = self.steps() as f64;
        self.c * steps.ln() / steps
    }

    /// Whether `1 - alpha_t <= c ln(T) / T` holds for every step.
    pub fn satisfies_step_bound(&self) -> bool {
        let bound = self.step_bound();
        self.beta.iter().all(|b| *b <= bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ve_sigma_reference_values() {
        // sigma_1^2 = 624 / (2 ln 25)
        let s = ve_sigma(25.0, 1.0).unwrap();
        assert_relative_eq!(s * s, 624.0 / (2.0 * 25f64.ln()), max_relative = 1e-14);
        assert_relative_eq!(s, 9.845_215, epsilon = 1e-6);
        let s = ve_sigma(5.0, 0.5).unwrap();
        assert_relative_eq!(s * s, 4.0 / (2.0 * 5f64.ln()), max_relative = 1e-14);
        assert_relative_eq!(s, 1.114_751, epsilon = 1e-6);
    }

    #[test]
    fn ve_sigma_vanishes_at_zero() {
        let s = ve_sigma(25.0, 1e-12).unwrap();
        assert!(s < 1e-5);
        let s = ve_sigma(25.0, 1e-5).unwrap();
        assert_relative_eq!(s * s, 1e-5, max_relative = 1e-4);
    }

    #[test]
    fn ve_sigma_domain_errors() {
        assert!(ve_sigma(25.0, 0.0).is_err());
        assert!(ve_sigma(25.0, -0.1).is_err());
        assert!(ve_sigma(25.0, 1.0001).is_err());
        assert!(ve_sigma(1.0, 0.5).is_err());
        assert!(ve_sigma(0.5, 0.5).is_err());
    }

    #[test]
    fn constant_schedule_values() {
        let s = DiscreteSchedule::make(100, 1.0).unwrap();
        let beta = 100f64.ln() / 100.0;
        assert_relative_eq!(s.beta()[0], beta, max_relative = 1e-15);
        assert_relative_eq!(s.beta()[0], 0.046_052, epsilon = 1e-6);
        assert_relative_eq!(s.alpha(1).unwrap(), 0.953_948, epsilon = 1e-6);
        // brute-force cumulative product
        let mut prod = 1.0;
        for _ in 0..100 {
            prod *= 1.0 - beta;
        }
        assert_eq!(s.alpha_bar_at(100).unwrap(), prod);
        assert_relative_eq!(prod, 0.008_963_6, epsilon = 1e-7);
        assert!(s.satisfies_step_bound());
    }

    #[test]
    fn vanishing_constant_is_noise_free() {
        let s = DiscreteSchedule::make(50, 1e-12).unwrap();
        assert_relative_eq!(s.alpha_bar_at(50).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn alpha_bar_hand_product() {
        let s = DiscreteSchedule::from_alphas(vec![0.9, 0.8, 0.7]).unwrap();
        assert_eq!(s.alpha_bar_at(0).unwrap(), 1.0);
        assert_relative_eq!(s.alpha_bar_at(3).unwrap(), 0.504, max_relative = 1e-14);
        assert!(s.alpha_bar_at(4).is_err());
        assert!(s.alpha(0).is_err());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DiscreteSchedule::make(1, 1.0).is_err());
        assert!(DiscreteSchedule::make(10, 0.0).is_err());
        // c ln(T)/T >= 1
        assert!(DiscreteSchedule::make(3, 3.0).is_err());
        assert!(DiscreteSchedule::from_alphas(vec![0.5, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn ve_sigma_is_monotone(sigma in 1.01f64..50.0, a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(ve_sigma(sigma, lo).unwrap() < ve_sigma(sigma, hi).unwrap());
        }

        #[test]
        fn alpha_bar_recursion(steps in 2usize..400, c in 0.01f64..1.0) {
            prop_assume!(c * (steps as f64).ln() / (steps as f64) < 1.0);
            let s = DiscreteSchedule::make(steps, c).unwrap();
            prop_assert!(s.satisfies_step_bound());
            for t in 1..=steps {
                let lhs = s.alpha_bar_at(t).unwrap();
                let rhs = s.alpha_bar_at(t - 1).unwrap() * s.alpha(t).unwrap();
                prop_assert_eq!(lhs, rhs);
                prop_assert!(lhs < s.alpha_bar_at(t - 1).unwrap());
            }
        }
    }
}
