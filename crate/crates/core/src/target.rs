//! Analytic target densities.
//!
//! Every target here has closed-form samples, closed-form log-densities of
//! its variance-exploding perturbation `q_t = q_0 * N(0, sigma_t^2 I)` and
//! closed-form scores `grad log q_t`. They are the ground truth that trained
//! models, samplers and sparsity diagnostics are measured against.
//!
//! Covariances are diagonal throughout, so Gaussian and Gaussian-uniform
//! targets factor over coordinates and only the mixture couples them (through
//! its responsibilities).

use std::f64::consts::FRAC_1_SQRT_2;

use libm::{erf, erfc};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian `N(mean, diag(var))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Domain("gaussian needs at least one coordinate".into()));
        }
        if mean.len() != var.len() {
            return Err(Error::Shape {
                context: "gaussian variance",
                expected: mean.len(),
                got: var.len(),
            });
        }
        if let Some(v) = var.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("variance entries must be positive, got {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("mean entries must be finite".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    fn log_density(&self, x: &[f64], sigma_sq: f64) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| gaussian_log_pdf(*xi, *m, v + sigma_sq))
            .sum()
    }

    fn score_into(&self, x: &[f64], sigma_sq: f64, out: &mut [f64]) {
        for (((o, m), v), xi) in out.iter_mut().zip(&self.mean).zip(&self.var).zip(x) {
            *o = -(xi - m) / (v + sigma_sq);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub gaussian: DiagGaussian,
}

/// Finite mixture of diagonal Gaussians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Domain("mixture needs at least one component".into()))?;
        let dim = first.gaussian.dim();
        for c in &components {
            if c.gaussian.dim() != dim {
                return Err(Error::Shape {
                    context: "mixture component",
                    expected: dim,
                    got: c.gaussian.dim(),
                });
            }
            if !(c.weight > 0.0) {
                return Err(Error::Domain(format!(
                    "mixture weight must be positive, got {}",
                    c.weight
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].gaussian.dim()
    }

    fn component_log_terms(&self, x: &[f64], sigma_sq: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.weight.ln() + c.gaussian.log_density(x, sigma_sq))
            .collect()
    }
}

/// One coordinate of a [`GaussianUniformProduct`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coordinate {
    Gaussian { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Independent coordinates, each Gaussian or uniform on an interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianUniformProduct {
    coords: Vec<Coordinate>,
}

impl GaussianUniformProduct {
    pub fn new(coords: Vec<Coordinate>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("product target needs at least one coordinate".into()));
        }
        for c in &coords {
            match *c {
                Coordinate::Gaussian { mean, var } => {
                    if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
                        return Err(Error::Domain(format!("invalid gaussian coordinate {c:?}")));
                    }
                }
                Coordinate::Uniform { lo, hi } => {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::Domain(format!("uniform bounds need lo < hi, got {c:?}")));
                    }
                }
            }
        }
        Ok(Self { coords })
    }

    /// Gaussian on the coordinates in `gaussian_coords`, uniform elsewhere.
    ///
    /// `means` and `vars` are given for the Gaussian coordinates in the order
    /// they appear in `gaussian_coords`; `bounds` covers the remaining
    /// coordinates in increasing index order.
    pub fn from_parts(
        dim: usize,
        gaussian_coords: &[usize],
        means: &[f64],
        vars: &[f64],
        bounds: &[(f64, f64)],
    ) -> Result<Self> {
        if means.len() != gaussian_coords.len() || vars.len() != gaussian_coords.len() {
            return Err(Error::Shape {
                context: "gaussian coordinate parameters",
                expected: gaussian_coords.len(),
                got: means.len().min(vars.len()),
            });
        }
        if gaussian_coords.iter().any(|&i| i >= dim) {
            return Err(Error::Domain("gaussian coordinate index out of range".into()));
        }
        let mut unique = gaussian_coords.to_vec();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != gaussian_coords.len() {
            return Err(Error::Domain("duplicate gaussian coordinate index".into()));
        }
        let n_uniform = dim - gaussian_coords.len();
        if bounds.len() != n_uniform {
            return Err(Error::Shape {
                context: "uniform bounds",
                expected: n_uniform,
                got: bounds.len(),
            });
        }
        let mut bound_iter = bounds.iter();
        let coords = (0..dim)
            .map(|i| match gaussian_coords.iter().position(|&g| g == i) {
                Some(k) => Coordinate::Gaussian {
                    mean: means[k],
                    var: vars[k],
                },
                None => {
                    let &(lo, hi) = bound_iter.next().expect("bounds counted above");
                    Coordinate::Uniform { lo, hi }
                }
            })
            .collect();
        Self::new(coords)
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn gaussian_coords(&self) -> Vec<usize> {
        self.coords
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Coordinate::Gaussian { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

/// An analytic data distribution `q_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDensity {
    Gaussian(DiagGaussian),
    GaussianMixture(GaussianMixture),
    GaussianUniformProduct(GaussianUniformProduct),
}

impl From<DiagGaussian> for TargetDensity {
    fn from(g: DiagGaussian) -> Self {
        TargetDensity::Gaussian(g)
    }
}

impl From<GaussianMixture> for TargetDensity {
    fn from(m: GaussianMixture) -> Self {
        TargetDensity::GaussianMixture(m)
    }
}

impl From<GaussianUniformProduct> for TargetDensity {
    fn from(p: GaussianUniformProduct) -> Self {
        TargetDensity::GaussianUniformProduct(p)
    }
}

impl TargetDensity {
    pub fn kind(&self) -> &'static str {
        match self {
            TargetDensity::Gaussian(_) => "gaussian",
            TargetDensity::GaussianMixture(_) => "gaussian_mixture",
            TargetDensity::GaussianUniformProduct(_) => "gaussian_uniform_product",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetDensity::Gaussian(g) => g.dim(),
            TargetDensity::GaussianMixture(m) => m.dim(),
            TargetDensity::GaussianUniformProduct(p) => p.dim(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&DiagGaussian> {
        match self {
            TargetDensity::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    /// Draws `n` i.i.d. rows from `q_0`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let row = row.as_slice_mut().expect("fresh arrays are contiguous");
            self.sample_into(rng, row);
        }
        out
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            TargetDensity::Gaussian(g) => {
                for ((o, m), v) in out.iter_mut().zip(&g.mean).zip(&g.var) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + v.sqrt() * z;
                }
            }
            TargetDensity::GaussianMixture(mix) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &mix.components[mix.components.len() - 1];
                for c in &mix.components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                for ((o, m), v) in out.iter_mut().zip(&chosen.gaussian.mean).zip(&chosen.gaussian.var) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + v.sqrt() * z;
                }
            }
            TargetDensity::GaussianUniformProduct(p) => {
                for (o, c) in out.iter_mut().zip(&p.coords) {
                    *o = match *c {
                        Coordinate::Gaussian { mean, var } => {
                            let z: f64 = rng.sample(StandardNormal);
                            mean + var.sqrt() * z
                        }
                        Coordinate::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                    };
                }
            }
        }
    }

    fn check_query(&self, x: &[f64], sigma_t: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                context: "target query point",
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !(sigma_t >= 0.0) || !sigma_t.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_t must be a finite non-negative value, got {sigma_t}"
            )));
        }
        Ok(())
    }

    /// Normalized `log q_t(x)` for the perturbation level `sigma_t`.
    pub fn log_density(&self, x: &[f64], sigma_t: f64) -> Result<f64> {
        self.check_query(x, sigma_t)?;
        let s2 = sigma_t * sigma_t;
        Ok(match self {
            TargetDensity::Gaussian(g) => g.log_density(x, s2),
            TargetDensity::GaussianMixture(m) => log_sum_exp(&m.component_log_terms(x, s2)),
            TargetDensity::GaussianUniformProduct(p) => p
                .coords
                .iter()
                .zip(x)
                .map(|(c, xi)| match *c {
                    Coordinate::Gaussian { mean, var } => gaussian_log_pdf(*xi, mean, var + s2),
                    Coordinate::Uniform { lo, hi } => smoothed_uniform_log_pdf(*xi, lo, hi, sigma_t),
                })
                .sum(),
        })
    }

    /// Exact score `grad_x log q_t(x)`.
    pub fn true_score(&self, x: &[f64], sigma_t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.true_score_into(x, sigma_t, &mut out)?;
        Ok(out)
    }

    pub fn true_score_into(&self, x: &[f64], sigma_t: f64, out: &mut [f64]) -> Result<()> {
        self.check_query(x, sigma_t)?;
        if out.len() != self.dim() {
            return Err(Error::Shape {
                context: "score output",
                expected: self.dim(),
                got: out.len(),
            });
        }
        let s2 = sigma_t * sigma_t;
        match self {
            TargetDensity::Gaussian(g) => g.score_into(x, s2, out),
            TargetDensity::GaussianMixture(m) => {
                // responsibilities via log-sum-exp
                let terms = m.component_log_terms(x, s2);
                let norm = log_sum_exp(&terms);
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut buf = vec![0.0; x.len()];
                for (c, lt) in m.components.iter().zip(&terms) {
                    let resp = (lt - norm).exp();
                    c.gaussian.score_into(x, s2, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += resp * b;
                    }
                }
            }
            TargetDensity::GaussianUniformProduct(p) => {
                for ((o, c), xi) in out.iter_mut().zip(&p.coords).zip(x) {
                    *o = match *c {
                        Coordinate::Gaussian { mean, var } => -(xi - mean) / (var + s2),
                        Coordinate::Uniform { lo, hi } => smoothed_uniform_score(*xi, lo, hi, sigma_t),
                    };
                }
            }
        }
        Ok(())
    }

    /// `E ||X_0||^2`.
    pub fn second_moment(&self) -> f64 {
        self.coordinate_moments().iter().map(|(m, v)| m * m + v).sum()
    }

    /// Per-coordinate `(mean, variance)` of `q_0`.
    pub fn coordinate_moments(&self) -> Vec<(f64, f64)> {
        match self {
            TargetDensity::Gaussian(g) => g.mean.iter().copied().zip(g.var.iter().copied()).collect(),
            TargetDensity::GaussianMixture(mix) => (0..mix.dim())
                .map(|i| {
                    let mean: f64 = mix.components.iter().map(|c| c.weight * c.gaussian.mean[i]).sum();
                    let raw2: f64 = mix
                        .components
                        .iter()
                        .map(|c| c.weight * (c.gaussian.var[i] + c.gaussian.mean[i].powi(2)))
                        .sum();
                    (mean, raw2 - mean * mean)
                })
                .collect(),
            TargetDensity::GaussianUniformProduct(p) => p
                .coords
                .iter()
                .map(|c| match *c {
                    Coordinate::Gaussian { mean, var } => (mean, var),
                    Coordinate::Uniform { lo, hi } => (0.5 * (lo + hi), (hi - lo).powi(2) / 12.0),
                })
                .collect(),
        }
    }
}

/// Denoising target `grad log q_t(x_t | x_0) = -(x_t - x_0) / sigma_t^2`.
pub fn conditional_score(x_t: &[f64], x0: &[f64], sigma_t: f64) -> Result<Vec<f64>> {
    if x_t.len() != x0.len() {
        return Err(Error::Shape {
            context: "conditional score",
            expected: x0.len(),
            got: x_t.len(),
        });
    }
    if !(sigma_t > 0.0) {
        return Err(Error::Domain(format!("sigma_t must be positive, got {sigma_t}")));
    }
    let inv = 1.0 / (sigma_t * sigma_t);
    Ok(x_t.iter().zip(x0).map(|(a, b)| -(a - b) * inv).collect())
}

/// Fits a diagonal Gaussian by per-coordinate sample mean and (1/n) variance.
pub fn fit_diag_gaussian(samples: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = samples.dim();
    if n == 0 {
        return Err(Error::Degenerate("no samples".into()));
    }
    let mut mean = vec![0.0; d];
    for row in samples.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in samples.rows() {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(row) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    Ok((mean, var))
}

/// `KL(fit || target)` in nats, where `fit` is the moment-matched diagonal
/// Gaussian of `samples`.
pub fn kl_gaussian_moments(samples: ArrayView2<'_, f64>, target: &DiagGaussian) -> Result<f64> {
    let (n, d) = samples.dim();
    if d != target.dim() {
        return Err(Error::Shape {
            context: "moment-matched KL",
            expected: target.dim(),
            got: d,
        });
    }
    if n <= d {
        return Err(Error::Degenerate(format!(
            "need more samples than dimensions, got n = {n}, d = {d}"
        )));
    }
    let (mean, var) = fit_diag_gaussian(samples)?;
    if let Some(v) = var.iter().find(|v| **v < 1e-12) {
        return Err(Error::Degenerate(format!("fitted variance {v} below 1e-12")));
    }
    Ok(kl_diag_gaussians(&mean, &var, &target.mean, &target.var))
}

/// Closed-form `KL(N(m1, v1) || N(m2, v2))` for diagonal covariances.
pub fn kl_diag_gaussians(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    let kl: f64 = m1
        .iter()
        .zip(v1)
        .zip(m2.iter().zip(v2))
        .map(|((a, va), (b, vb))| {
            let ratio = va / vb;
            ratio + (a - b).powi(2) / vb - 1.0 - ratio.ln()
        })
        .sum::<f64>()
        * 0.5;
    kl.max(0.0)
}

pub(crate) fn gaussian_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_phi(u: f64) -> f64 {
    -0.5 * (u * u + LN_2PI)
}

/// Boundary of the far-tail asymptotic regime, in standard deviations.
const TAIL: f64 = 8.0;

/// `ln Phi(u)` for the standard normal CDF, stable far into the left tail.
pub(crate) fn log_ndtr(u: f64) -> f64 {
    if u > 0.0 {
        (-0.5 * erfc(u * FRAC_1_SQRT_2)).ln_1p()
    } else if u > -TAIL {
        (0.5 * erfc(-u * FRAC_1_SQRT_2)).ln()
    } else {
        // Phi(u) = phi(u)/|u| * sum_k (-1)^k (2k-1)!! / u^{2k}
        let inv2 = 1.0 / (u * u);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=20 {
            term *= -((2 * k - 1) as f64) * inv2;
            sum += term;
        }
        log_phi(u) - (-u).ln() + sum.ln()
    }
}

/// `ln(Phi(hi) - Phi(lo))` for `lo < hi`.
fn log_ndtr_diff(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        return log_ndtr_diff(-hi, -lo);
    }
    if hi <= 0.0 {
        let a = log_ndtr(hi);
        let b = log_ndtr(lo);
        a + (-(b - a).exp_m1()).ln()
    } else {
        // opposite signs: the erf difference does not cancel
        (0.5 * (erf(hi * FRAC_1_SQRT_2) - erf(lo * FRAC_1_SQRT_2))).ln()
    }
}

/// Log-density of `U[lo, hi]` convolved with `N(0, sigma^2)`.
fn smoothed_uniform_log_pdf(x: f64, lo: f64, hi: f64, sigma: f64) -> f64 {
    let width = hi - lo;
    if sigma == 0.0 {
        return if (lo..=hi).contains(&x) {
            -width.ln()
        } else {
            f64::NEG_INFINITY
        };
    }
    log_ndtr_diff((lo - x) / sigma, (hi - x) / sigma) - width.ln()
}

/// Score of `U[lo, hi]` convolved with `N(0, sigma^2)`:
/// `(phi(u_lo) - phi(u_hi)) / (sigma (Phi(u_hi) - Phi(u_lo)))`.
fn smoothed_uniform_score(x: f64, lo: f64, hi: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let u_lo = (lo - x) / sigma;
    let u_hi = (hi - x) / sigma;
    let log_mass = log_ndtr_diff(u_lo, u_hi);
    ((log_phi(u_lo) - log_mass).exp() - (log_phi(u_hi) - log_mass).exp()) / sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn toy_gaussian() -> TargetDensity {
        DiagGaussian::new(vec![0.0; 3], vec![0.08, 1.0, 1.0]).unwrap().into()
    }

    fn central_diff(target: &TargetDensity, x: &[f64], sigma: f64, h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (target.log_density(&xp, sigma).unwrap() - target.log_density(&xm, sigma).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn conditional_score_closed_form() {
        assert_eq!(
            conditional_score(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(conditional_score(&[1.0], &[0.0], 1.0).unwrap(), vec![-1.0]);
        assert_eq!(
            conditional_score(&[3.0, -1.0], &[0.0, 0.0], 2.0).unwrap(),
            vec![-0.75, 0.25]
        );
        assert!(conditional_score(&[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn toy_gaussian_score_matches_finite_differences() {
        let t = toy_gaussian();
        let x = [1.0, 1.0, 1.0];
        let s = t.true_score(&x, 1.0).unwrap();
        assert_relative_eq!(s[0], -1.0 / 1.08, max_relative = 1e-14);
        assert_relative_eq!(s[1], -0.5);
        assert_relative_eq!(s[2], -0.5);
        let fd = central_diff(&t, &x, 1.0, 1e-5);
        for (a, b) in s.iter().zip(&fd) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn gaussian_log_density_normalizers() {
        let t: TargetDensity = DiagGaussian::standard(1).unwrap().into();
        assert_relative_eq!(
            t.log_density(&[0.0], 0.0).unwrap(),
            -0.918_938_533_204_672_7,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            t.log_density(&[0.0], 1.0).unwrap(),
            -0.5 * (4.0 * PI).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn symmetric_mixture_at_center() {
        let comp = |m: f64| MixtureComponent {
            weight: 0.5,
            gaussian: DiagGaussian::new(vec![m], vec![0.3]).unwrap(),
        };
        let t: TargetDensity = GaussianMixture::new(vec![comp(-1.5), comp(1.5)]).unwrap().into();
        let s = t.true_score(&[0.0], 0.7).unwrap();
        assert!(s[0].abs() < 1e-15);
        // direct two-term sum
        let v = 0.3 + 0.49;
        let direct = (0.5 * gaussian_log_pdf(0.0, -1.5, v).exp() + 0.5 * gaussian_log_pdf(0.0, 1.5, v).exp()).ln();
        assert_relative_eq!(t.log_density(&[0.0], 0.7).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn smoothed_uniform_score_signs() {
        let t: TargetDensity = GaussianUniformProduct::new(vec![Coordinate::Uniform { lo: 0.0, hi: 1.0 }])
            .unwrap()
            .into();
        assert!(t.true_score(&[0.5], 0.1).unwrap()[0].abs() < 1e-15);
        let s = t.true_score(&[1.2], 0.1).unwrap()[0];
        assert!(s < 0.0);
        let fd = central_diff(&t, &[1.2], 0.1, 1e-5)[0];
        assert_relative_eq!(s, fd, max_relative = 1e-6);
    }

    #[test]
    fn smoothed_uniform_far_tail_is_finite() {
        let t: TargetDensity = GaussianUniformProduct::new(vec![Coordinate::Uniform { lo: 0.0, hi: 1.0 }])
            .unwrap()
            .into();
        for x in [-40.0, -3.0, 4.0, 60.0] {
            let s = t.true_score(&[x], 0.05).unwrap()[0];
            let l = t.log_density(&[x], 0.05).unwrap();
            assert!(s.is_finite() && l.is_finite(), "x = {x}: score {s}, log density {l}");
            let edge = if x > 1.0 { 1.0 } else { 0.0 };
            // far from the support the score approaches the Gaussian tail slope
            assert_relative_eq!(s, -(x - edge) / 0.0025, max_relative = 0.02);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision, clippy::approx_constant)]
    fn log_ndtr_matches_high_precision_reference() {
        // 40-digit reference values, straddling both regime switches
        let table = [
            (-40.0, -804.608_442_013_753_79),
            (-12.0, -75.410_673_001_568_796),
            (-8.000_001, -35.013_445_281_283_149),
            (-7.999_999, -35.013_429_038_546_929),
            (-3.0, -6.607_726_221_510_349_5),
            (0.0, -0.693_147_180_559_945_31),
            (2.0, -0.023_012_909_328_963_488),
            (4.999_999, -2.866_530_996_874_215_1e-7),
            (5.000_001, -2.866_501_262_475_392_8e-7),
            (9.0, -1.128_588_405_953_840_6e-19),
        ];
        for (u, want) in table {
            assert_relative_eq!(log_ndtr(u), want, max_relative = 1e-11);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = toy_gaussian();
        let a = t.sample(50, &mut ChaCha8Rng::seed_from_u64(3));
        let b = t.sample(50, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn toy_gaussian_sample_covariance() {
        let t = toy_gaussian();
        let xs = t.sample(2000, &mut ChaCha8Rng::seed_from_u64(11));
        let (_, var) = fit_diag_gaussian(xs.view()).unwrap();
        // variance of a sample variance is 2 v^2 / n
        for (v, target) in var.iter().zip([0.08, 1.0, 1.0]) {
            let se = target * (2.0f64 / 2000.0).sqrt();
            assert!((v - target).abs() < 4.0 * se, "{v} vs {target}");
        }
    }

    #[test]
    fn gaussian_uniform_sample_means() {
        let p = GaussianUniformProduct::from_parts(3, &[0], &[0.0], &[1.0], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let t: TargetDensity = p.into();
        let n = 100_000;
        let xs = t.sample(n, &mut ChaCha8Rng::seed_from_u64(5));
        let (mean, _) = fit_diag_gaussian(xs.view()).unwrap();
        let se = [
            1.0 / (n as f64).sqrt(),
            (1.0 / 12.0 / n as f64).sqrt(),
            (1.0 / 12.0 / n as f64).sqrt(),
        ];
        for ((m, want), se) in mean.iter().zip([0.0, 0.5, 0.5]).zip(se) {
            assert!((m - want).abs() < 3.0 * se, "{m} vs {want}");
        }
    }

    #[test]
    fn product_restricts_to_gaussian_score() {
        let p = GaussianUniformProduct::from_parts(3, &[1], &[0.4], &[0.6], &[(-1.0, 1.0), (0.0, 2.0)]).unwrap();
        let g: TargetDensity = DiagGaussian::new(vec![0.4], vec![0.6]).unwrap().into();
        let x = [0.3, -0.7, 2.5];
        let s = TargetDensity::from(p).true_score(&x, 0.4).unwrap();
        assert_eq!(s[1], g.true_score(&[-0.7], 0.4).unwrap()[0]);
    }

    #[test]
    fn moment_kl_closed_forms() {
        assert_relative_eq!(
            kl_diag_gaussians(&[0.0], &[2.0], &[0.0], &[1.0]),
            0.5 * (1.0 - 2f64.ln()),
            max_relative = 1e-14
        );
        assert_relative_eq!(0.5 * (1.0 - 2f64.ln()), 0.153_426, epsilon = 1e-6);
        assert_relative_eq!(
            kl_diag_gaussians(&[0.1], &[1.0], &[0.0], &[1.0]),
            0.005,
            max_relative = 1e-12
        );
        assert_eq!(
            kl_diag_gaussians(&[0.3, 1.0], &[0.5, 2.0], &[0.3, 1.0], &[0.5, 2.0]),
            0.0
        );
    }

    #[test]
    fn moment_kl_from_target_samples_is_small() {
        let g = DiagGaussian::new(vec![0.5, -1.0], vec![0.2, 3.0]).unwrap();
        let xs = TargetDensity::from(g.clone()).sample(200_000, &mut ChaCha8Rng::seed_from_u64(9));
        let kl = kl_gaussian_moments(xs.view(), &g).unwrap();
        assert!(kl < 1e-4, "{kl}");
    }

    #[test]
    fn moment_kl_rejects_degenerate_samples() {
        let g = DiagGaussian::standard(2).unwrap();
        let xs = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 1.0, 0.5, 1.0, -0.5, 1.0, 0.2]).unwrap();
        assert!(matches!(kl_gaussian_moments(xs.view(), &g), Err(Error::Degenerate(_))));
        let few = Array2::zeros((2, 2));
        assert!(kl_gaussian_moments(few.view(), &g).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let c = |w: f64| MixtureComponent {
            weight: w,
            gaussian: DiagGaussian::standard(1).unwrap(),
        };
        assert!(GaussianMixture::new(vec![c(0.5), c(0.6)]).is_err());
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianUniformProduct::new(vec![Coordinate::Uniform { lo: 1.0, hi: 1.0 }]).is_err());
    }
}
