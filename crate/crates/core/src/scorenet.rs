//! Feed-forward ReLU score network `kappa * s(x, t)`.
//!
//! The network sees `[x, fourier(t)]`, runs `L` ReLU hidden layers and a
//! linear head of width `d`. All weights and biases live in one flat vector
//! so the optimizer and the l1-ball projection treat the whole parameter tuple
//! as a single point in `R^p`.
//!
//! With the output cap enabled the head output `o` is rescaled to
//! `s = o / max(1, ||o||_1 / cap)`, which keeps `||s||_1 <= cap` for every
//! input while staying differentiable almost everywhere.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::ScoreFunction;

/// Architecture and constraint settings of a [`ScoreModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    /// Number of Fourier time features (even).
    pub time_feat_dim: usize,
    /// Standard deviation of the frozen Fourier frequencies.
    pub fourier_scale: f64,
    /// Radius of the l1 ball the parameters are projected onto.
    pub l1_radius: f64,
    /// Whether the output is rescaled into the l1 ball of radius `output_l1_cap`.
    pub output_cap: bool,
    pub output_l1_cap: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            time_feat_dim: 16,
            fourier_scale: 1.0,
            l1_radius: 1.0,
            output_cap: true,
            output_l1_cap: 1.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_feat_dim < 2 || !self.time_feat_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time feature width must be even and at least 2, got {}",
                self.time_feat_dim
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.l1_radius > 0.0) || !(self.output_l1_cap > 0.0) {
            return Err(Error::Config("l1 radius and output cap must be positive".into()));
        }
        if !(self.fourier_scale > 0.0) {
            return Err(Error::Config("fourier scale must be positive".into()));
        }
        Ok(())
    }
}

/// Frozen Gaussian Fourier projection of the time input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierFeatures {
    freqs: Vec<f64>,
}

impl FourierFeatures {
    /// Draws `width / 2` frequencies from `N(0, scale^2)`.
    pub fn new<R: Rng + ?Sized>(width: usize, scale: f64, rng: &mut R) -> Result<Self> {
        if width < 2 || !width.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "feature width must be even and >= 2, got {width}"
            )));
        }
        let freqs = (0..width / 2)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self { freqs })
    }

    pub fn from_freqs(freqs: Vec<f64>) -> Self {
        Self { freqs }
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn width(&self) -> usize {
        2 * self.freqs.len()
    }

    /// Writes `[sin(2 pi f_k t)]_k ++ [cos(2 pi f_k t)]_k` into `out`.
    pub fn embed_into(&self, t: f64, out: &mut [f64]) {
        let (sin, cos) = out.split_at_mut(self.freqs.len());
        for ((s, c), f) in sin.iter_mut().zip(cos.iter_mut()).zip(&self.freqs) {
            let (a, b) = (TAU * f * t).sin_cos();
            *s = a;
            *c = b;
        }
    }

    pub fn embed(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.embed_into(t, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Layer {
    fn weight_len(&self) -> usize {
        self.rows * self.cols
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }

    fn len(&self) -> usize {
        self.weight_len() + self.rows
    }
}

/// Gradient of a scalar with respect to every parameter and `kappa`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_params: Vec<f64>,
    pub d_kappa: f64,
}

impl GradientBundle {
    pub fn zeros(param_count: usize) -> Self {
        Self {
            d_params: vec![0.0; param_count],
            d_kappa: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.d_params.iter_mut().zip(&other.d_params) {
            *a += b;
        }
        self.d_kappa += other.d_kappa;
    }

    pub fn is_zero(&self) -> bool {
        self.d_kappa == 0.0 && self.d_params.iter().all(|g| *g == 0.0)
    }
}

/// Per-evaluation scratch space, reusable across calls.
#[derive(Clone, Debug)]
pub struct Workspace {
    /// `acts[0]` is the network input; `acts[l + 1]` the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    head: Vec<f64>,
    out: Vec<f64>,
    /// `cap / ||head||_1` when the cap is active, otherwise `None`.
    cap_scale: Option<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// The parameterized score `kappa * s_params(x, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    dim: usize,
    config: NetConfig,
    layers: Vec<Layer>,
    params: Vec<f64>,
    kappa: f64,
    features: FourierFeatures,
}

impl ScoreModel {
    /// He-initialized network for `dim`-dimensional data; biases start at zero.
    pub fn new<R: Rng + ?Sized>(dim: usize, config: NetConfig, kappa: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::Domain("data dimension must be positive".into()));
        }
        if !(kappa > 0.0) {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        let features = FourierFeatures::new(config.time_feat_dim, config.fourier_scale, rng)?;
        let layers = layer_layout(dim, &config);
        let total = layers.last().map(|l| l.offset + l.len()).unwrap_or(0);
        let mut params = vec![0.0; total];
        let n_layers = layers.len();
        for (i, layer) in layers.iter().enumerate() {
            let gain = if i + 1 == n_layers { 1.0 } else { 2.0 };
            let std = (gain / layer.cols as f64).sqrt();
            for w in &mut params[layer.offset..layer.offset + layer.weight_len()] {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(Self {
            dim,
            config,
            layers,
            params,
            kappa,
            features,
        })
    }

    /// Rebuilds a model from stored parts, checking every shape.
    pub fn from_parts(dim: usize, config: NetConfig, params: Vec<f64>, kappa: f64, freqs: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if freqs.len() * 2 != config.time_feat_dim {
            return Err(Error::Shape {
                context: "fourier frequencies",
                expected: config.time_feat_dim / 2,
                got: freqs.len(),
            });
        }
        let layers = layer_layout(dim, &config);
        let total = layers.last().map(|l| l.offset + l.len()).unwrap_or(0);
        if params.len() != total {
            return Err(Error::Shape {
                context: "parameter vector",
                expected: total,
                got: params.len(),
            });
        }
        Ok(Self {
            dim,
            config,
            layers,
            params,
            kappa,
            features: FourierFeatures::from_freqs(freqs),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn set_kappa(&mut self, kappa: f64) {
        self.kappa = kappa;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn features(&self) -> &FourierFeatures {
        &self.features
    }

    pub fn l1_norm(&self) -> f64 {
        self.params.iter().map(|p| p.abs()).sum()
    }

    /// Projects the parameters onto the configured l1 ball.
    pub fn project(&mut self) -> f64 {
        project_l1(&mut self.params, self.config.l1_radius)
    }

    /// `(name, [rows, cols], values)` for every weight matrix and bias vector.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{i}.weight"),
                vec![l.rows, l.cols],
                &self.params[l.offset..l.bias_offset()],
            ));
            out.push((
                format!("layer{i}.bias"),
                vec![l.rows],
                &self.params[l.bias_offset()..l.offset + l.len()],
            ));
        }
        out
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = vec![vec![0.0; self.dim + self.features.width()]];
        acts.extend(self.config.hidden.iter().map(|&w| vec![0.0; w]));
        let widest = self.layers.iter().map(|l| l.rows.max(l.cols)).max().unwrap_or(0);
        Workspace {
            acts,
            head: vec![0.0; self.dim],
            out: vec![0.0; self.dim],
            cap_scale: None,
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }

    fn check_input(&self, x: &[f64], t: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                context: "network input",
                expected: self.dim,
                got: x.len(),
            });
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Domain(format!("t must lie in (0, 1], got {t}")));
        }
        Ok(())
    }

    /// The capped network output `s(x, t)` (without `kappa`).
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_input(x, t)?;
        let mut ws = self.workspace();
        Ok(self.forward_ws(x, t, &mut ws).to_vec())
    }

    /// Unchecked forward pass that records activations in `ws`.
    pub fn forward_ws<'w>(&self, x: &[f64], t: f64, ws: &'w mut Workspace) -> &'w [f64] {
        {
            let input = &mut ws.acts[0];
            input[..self.dim].copy_from_slice(x);
            self.features.embed_into(t, &mut input[self.dim..]);
        }
        let n_hidden = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let output: &mut [f64] = if l < n_hidden { &mut rest[0] } else { &mut ws.head };
            affine(&self.params, layer, input, output);
            if l < n_hidden {
                output.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        ws.out.copy_from_slice(&ws.head);
        ws.cap_scale = None;
        if self.config.output_cap {
            let norm: f64 = ws.head.iter().map(|v| v.abs()).sum();
            if norm > self.config.output_l1_cap {
                let scale = self.config.output_l1_cap / norm;
                ws.out.iter_mut().for_each(|v| *v *= scale);
                let extra = settle_in_ball(&mut ws.out, self.config.output_l1_cap);
                ws.cap_scale = Some(scale * extra);
            }
        }
        &ws.out
    }

    /// Gradient of `<upstream, kappa * s(x, t)>` with respect to the
    /// parameters and `kappa`.
    pub fn backward(&self, x: &[f64], t: f64, upstream: &[f64]) -> Result<GradientBundle> {
        self.check_input(x, t)?;
        if upstream.len() != self.dim {
            return Err(Error::Shape {
                context: "upstream gradient",
                expected: self.dim,
                got: upstream.len(),
            });
        }
        let mut ws = self.workspace();
        self.forward_ws(x, t, &mut ws);
        let mut grad = GradientBundle::zeros(self.param_count());
        grad.d_kappa = self.backward_ws(&mut ws, upstream, &mut grad.d_params);
        Ok(grad)
    }

    /// Accumulates the parameter gradient of `<upstream, kappa * s>` into
    /// `d_params` using the activations left in `ws` by [`Self::forward_ws`],
    /// and returns the `kappa` derivative `<upstream, s>`.
    pub fn backward_ws(&self, ws: &mut Workspace, upstream: &[f64], d_params: &mut [f64]) -> f64 {
        let d_kappa: f64 = upstream.iter().zip(&ws.out).map(|(u, s)| u * s).sum();
        let d = self.dim;
        let delta = &mut ws.delta[..d];
        for (g, u) in delta.iter_mut().zip(upstream) {
            *g = self.kappa * u;
        }
        if let Some(scale) = ws.cap_scale {
            // s = c o with c = cap / ||o||_1:
            // dL/do_j = c (g_j - sign(o_j) <g, o> / ||o||_1)
            let norm = self.config.output_l1_cap / scale;
            let dot: f64 = delta.iter().zip(&ws.head).map(|(g, o)| g * o).sum();
            for (g, o) in delta.iter_mut().zip(&ws.head) {
                let sign = if *o > 0.0 {
                    1.0
                } else if *o < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *g = scale * (*g - sign * dot / norm);
            }
        }
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let input = &ws.acts[l];
            let delta = &ws.delta[..layer.rows];
            let (gw, gb) = d_params[layer.offset..layer.offset + layer.len()].split_at_mut(layer.weight_len());
            for (i, &di) in delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                gb[i] += di;
                let row = &mut gw[i * layer.cols..(i + 1) * layer.cols];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += di * a;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[layer.offset..layer.bias_offset()];
            let prev = &mut ws.delta_prev[..layer.cols];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for (i, &di) in delta.iter().enumerate() {
                if di == 0.0 {
                    continue;
                }
                let row = &weights[i * layer.cols..(i + 1) * layer.cols];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += di * w;
                }
            }
            // ReLU subgradient is 0 at the kink
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        d_kappa
    }
}

impl ScoreFunction for ScoreModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut ws = self.workspace();
        let s = self.forward_ws(x, t, &mut ws);
        for (o, v) in out.iter_mut().zip(s) {
            *o = self.kappa * v;
        }
    }
}

fn layer_layout(dim: usize, config: &NetConfig) -> Vec<Layer> {
    let mut widths = vec![dim + config.time_feat_dim];
    widths.extend(&config.hidden);
    widths.push(dim);
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let layer = Layer {
                rows: w[1],
                cols: w[0],
                offset,
            };
            offset += layer.len();
            layer
        })
        .collect()
}

fn affine(params: &[f64], layer: &Layer, input: &[f64], output: &mut [f64]) {
    let weights = &params[layer.offset..layer.bias_offset()];
    let bias = &params[layer.bias_offset()..layer.offset + layer.len()];
    for (i, (o, b)) in output.iter_mut().zip(bias).enumerate() {
        let row = &weights[i * layer.cols..(i + 1) * layer.cols];
        *o = b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
    }
}

/// Euclidean projection onto `{v : ||v||_1 <= radius}`, in place.
///
/// Soft-thresholds with the exact threshold found by sorting magnitudes.
/// Returns the threshold (0 when `v` already lies in the ball).
pub fn project_l1(v: &mut [f64], radius: f64) -> f64 {
    debug_assert!(radius > 0.0);
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return 0.0;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        let shrunk = (x.abs() - tau).max(0.0);
        *x = shrunk.copysign(*x);
    }
    settle_in_ball(v, radius);
    tau
}

/// Shrinks `v` until its summed l1 norm is at most `radius`, undoing the
/// last-ulp overshoot of an exact rescale or soft threshold. Returns the
/// factor applied.
fn settle_in_ball(v: &mut [f64], radius: f64) -> f64 {
    let mut total = 1.0;
    loop {
        let norm: f64 = v.iter().map(|x| x.abs()).sum();
        if norm <= radius {
            return total;
        }
        let f = radius / norm * (1.0 - f64::EPSILON);
        v.iter_mut().for_each(|x| *x *= f);
        total *= f;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64, cap: bool) -> ScoreModel {
        let cfg = NetConfig {
            hidden: vec![8, 6],
            time_feat_dim: 4,
            fourier_scale: 2.0,
            output_cap: cap,
            ..NetConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = ScoreModel::new(3, cfg, 1.3, &mut rng).unwrap();
        for p in m.params_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        m
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = small_model(1, true);
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.forward(&[0.3, -2.0, 1.0], 0.4).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = small_model(7, true).forward(&[0.1, 0.2, 0.3], 0.5).unwrap();
        let b = small_model(7, true).forward(&[0.1, 0.2, 0.3], 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_checks_inputs() {
        let m = small_model(1, true);
        assert!(m.forward(&[0.0, 0.0], 0.5).is_err());
        assert!(m.forward(&[0.0; 3], 0.0).is_err());
        assert!(m.backward(&[0.0; 3], 0.5, &[1.0]).is_err());
    }

    #[test]
    fn fourier_features_at_zero() {
        let f = FourierFeatures::new(6, 30.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(f.embed(0.0), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(f.embed(0.37).iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(f.embed(0.37), f.embed(0.37));
        assert!(FourierFeatures::new(5, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = small_model(3, true);
        assert!(m.backward(&[0.2, 0.1, -0.4], 0.3, &[0.0; 3]).unwrap().is_zero());
    }

    #[test]
    fn doubling_kappa_doubles_param_gradient() {
        let mut m = small_model(4, true);
        let (x, u) = ([0.5, -0.2, 0.9], [0.3, -1.0, 0.7]);
        let g1 = m.backward(&x, 0.6, &u).unwrap();
        m.set_kappa(2.0 * m.kappa());
        let g2 = m.backward(&x, 0.6, &u).unwrap();
        assert_eq!(g1.d_kappa, g2.d_kappa);
        for (a, b) in g1.d_params.iter().zip(&g2.d_params) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let mut v = vec![0.8, 0.6];
        project_l1(&mut v, 1.0);
        assert_relative_eq!(v[0], 0.6, max_relative = 1e-14);
        assert_relative_eq!(v[1], 0.4, max_relative = 1e-14);
        let mut v = vec![2.0, 0.0];
        project_l1(&mut v, 1.0);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut v = vec![0.2, -0.3];
        assert_eq!(project_l1(&mut v, 1.0), 0.0);
        assert_eq!(v, vec![0.2, -0.3]);
    }

    #[test]
    fn projection_matches_bisection_oracle() {
        // brute-force threshold by bisection on sum max(|v| - tau, 0) = r
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let v: Vec<f64> = (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let radius = 0.5 + rng.random::<f64>() * 3.0;
            let mass = |tau: f64| v.iter().map(|x| (x.abs() - tau).max(0.0)).sum::<f64>();
            let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mass(mid) > radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut w = v.clone();
            let tau = project_l1(&mut w, radius);
            assert_relative_eq!(tau, 0.5 * (lo + hi), epsilon = 1e-12);
            let norm: f64 = w.iter().map(|x| x.abs()).sum();
            assert_relative_eq!(norm, radius, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_lands_in_ball(v in proptest::collection::vec(-5.0f64..5.0, 1..200), radius in 0.01f64..4.0) {
            let mut w = v.clone();
            project_l1(&mut w, radius);
            let norm: f64 = w.iter().map(|x| x.abs()).sum();
            prop_assert!(norm <= radius);
            for (a, b) in v.iter().zip(&w) {
                prop_assert!(b.abs() <= a.abs());
                prop_assert!(*b == 0.0 || a.signum() == b.signum());
            }
        }

        #[test]
        fn capped_output_stays_in_ball(x in proptest::collection::vec(-50.0f64..50.0, 3), t in 1e-5f64..1.0) {
            let m = small_model(5, true);
            let s = m.forward(&x, t).unwrap();
            prop_assert!(s.iter().map(|v| v.abs()).sum::<f64>() <= 1.0);
        }
    }
}
