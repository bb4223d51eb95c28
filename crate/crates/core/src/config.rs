//! Run configuration: `section.key = value` lines over a fixed key registry.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! Values are kept as text and parsed on access; [`RunConfig::validate`]
//! parses all of them once up front.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::DataFormat;
use crate::objective::Weighting;
use crate::sampler::{SamplerConfig, StepMode};
use crate::schedule::{DiscreteSchedule, VeSchedule};
use crate::scorenet::NetConfig;
use crate::target::{DiagGaussian, GaussianMixture, GaussianUniformProduct, MixtureComponent, TargetDensity};
use crate::trainer::TrainConfig;

/// Environment variable that overrides `output.dir`.
pub const OUT_ENV: &str = "SPARSE_SCORE_OUT";

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

macro_rules! keys {
    ($($key:literal = $default:literal : $doc:literal;)*) => {
        pub const KEYS: &[KeySpec] = &[$(KeySpec { key: $key, default: $default, doc: $doc }),*];
    };
}

keys! {
    "target.kind" = "gaussian" : "gaussian | gaussian_mixture | gaussian_uniform_product";
    "target.mean" = "0, 0, 0" : "means (gaussian; gaussian coordinates of the product)";
    "target.var" = "0.08, 1, 1" : "variances, same layout as target.mean";
    "target.mixture" = "" : "components `weight | m1, m2 | v1, v2` separated by `;`";
    "target.gaussian_coords" = "" : "indices of the gaussian coordinates of the product";
    "target.uniform_bounds" = "" : "`lo:hi` per remaining product coordinate, in index order";
    "schedule.sigma_max" = "25" : "noise scale of the exploding schedule";
    "schedule.eps" = "1e-5" : "smallest diffusion time";
    "schedule.steps" = "50" : "length of the discrete schedule used by the tilting check";
    "schedule.c" = "1" : "discrete schedule constant, beta = c ln T / T";
    "net.hidden" = "64, 64, 64" : "hidden layer widths";
    "net.time_feat_dim" = "16" : "number of Fourier time features (even)";
    "net.fourier_scale" = "1" : "std of the frozen Fourier frequencies";
    "net.l1_radius" = "300" : "l1 ball radius for the parameter projection";
    "net.output_cap" = "on" : "rescale outputs into the l1 ball of radius net.output_l1_cap";
    "net.output_l1_cap" = "1" : "output l1 cap";
    "objective.r" = "0.001" : "kappa penalty; 0 selects plain score matching (no projection, no cap, kappa = 1 fixed)";
    "objective.weighting" = "sigma2" : "none | sigma2 (per-row weight sigma_t^2)";
    "train.n" = "2000" : "training samples drawn from the target";
    "train.epochs" = "600" : "passes over the training set";
    "train.batch_size" = "128" : "minibatch rows";
    "train.learning_rate" = "0.001" : "Adam step size";
    "train.seed" = "0" : "seed for data, initialization and batches";
    "train.projection" = "on" : "project parameters onto the l1 ball after each step";
    "train.kappa_init" = "10" : "initial scale kappa";
    "train.kappa_trainable" = "on" : "update kappa with Adam";
    "train.checkpoint_every" = "0" : "write a checkpoint every k epochs (0 = final only)";
    "train.data" = "" : "file of training samples instead of target draws";
    "train.data_format" = "csv" : "csv | idx";
    "train.data_dim" = "0" : "required width of train.data (0 accepts any)";
    "sampler.steps" = "60" : "grid points from 1 down to schedule.eps";
    "sampler.chains" = "2000" : "independent chains";
    "sampler.mode" = "reverse_sde" : "langevin | snr | reverse_sde";
    "sampler.snr" = "0.16" : "signal-to-noise ratio for sampler.mode = snr";
    "sampler.noise" = "on" : "off gives the zero-temperature iteration";
    "sampler.record" = "off" : "store full trajectories";
    "sampler.seed" = "0" : "sampling seed";
    "metrics.n_t" = "200" : "times for the score error";
    "metrics.n_x" = "16" : "draws per time for the score error";
    "metrics.n_mc" = "2000" : "draws for sparsity profiles and the audit";
    "metrics.knn_k" = "5" : "neighbour rank of the knn KL estimate";
    "metrics.reference" = "2000" : "target draws compared against generated samples";
    "metrics.s_levels" = "1, 2, 3" : "sparsity levels of the profile";
    "metrics.audit_s" = "1" : "sparsity level of the bound audit";
    "metrics.audit_b" = "auto" : "derivative bound of the audit; auto estimates it";
    "metrics.tilting_points" = "41" : "grid points of the tilting check";
    "metrics.tilting_x" = "0.4" : "conditioning value of the tilting check";
    "sweep.r" = "0, 0.001" : "penalties of the sweep grid";
    "sweep.steps" = "100" : "sampler step counts of the sweep grid";
    "sweep.s" = "1, 2, 4, 8" : "numbers of gaussian coordinates";
    "sweep.seeds" = "0, 1, 2" : "seeds of the sweep grid";
    "sweep.dim" = "8" : "dimension of the sweep target";
    "sweep.gaussian_var" = "1" : "variance of the gaussian coordinates";
    "sweep.uniform_half_width" = "1" : "uniform coordinates live on [-w, w]";
    "sweep.jobs" = "1" : "cells run concurrently";
    "output.dir" = "runs" : "output root (SPARSE_SCORE_OUT overrides)";
    "output.plot" = "on" : "write SVG figures";
    "output.paths" = "8" : "chains drawn per trajectory panel";
}

/// Keys left out of the content hash: seeds are reported on their own and
/// output settings do not change any number.
const UNHASHED: &[&str] = &["train.seed", "sampler.seed", "sweep.seeds", "output.dir", "output.plot"];

pub fn help_text() -> String {
    let width = KEYS
        .iter()
        .map(|k| k.key.len() + k.default.len() + 3)
        .max()
        .unwrap_or(0);
    let mut out = String::from("Configuration keys (`section.key = value`, default shown):\n");
    for k in KEYS {
        let lhs = format!("{} = {}", k.key, k.default);
        let _ = writeln!(out, "  {lhs:<width$}  {}", k.doc);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.key.to_string(), k.default.to_string()))
                .collect(),
        }
    }
}

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {want}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v, "on or off")),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str, want: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(key, v, want)))
        .collect()
}

impl RunConfig {
    /// Defaults overlaid with the lines of `text`. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `section.key = value`, got {raw:?}", no + 1))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if spec(key).is_none() {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    fn num<T: FromStr>(&self, key: &str, want: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(key, v, want))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.num(key, "a number")
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.num(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.num(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        parse_bool(key, self.get(key))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(key, self.get(key), "comma-separated numbers")
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        parse_list(key, self.get(key), "comma-separated integers")
    }

    pub fn u64_list(&self, key: &str) -> Result<Vec<u64>> {
        parse_list(key, self.get(key), "comma-separated integers")
    }

    /// Resolved configuration, one `key = value` line per key in key order.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    /// SHA-256 of the resolved configuration without seeds and output settings.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if !UNHASHED.contains(&k.as_str()) {
                h.update(format!("{k} = {v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// `--out` beats `SPARSE_SCORE_OUT`, which beats `output.dir`.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(self.get("output.dir")),
        }
    }

    /// Parses every typed view once so bad values fail before any work.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.discrete_schedule()?;
        self.target()?;
        self.net()?.validate()?;
        self.train()?.validate()?;
        self.sampler()?.validate()?;
        self.data_source()?;
        for key in [
            "train.n",
            "train.checkpoint_every",
            "train.data_dim",
            "metrics.n_t",
            "metrics.n_x",
            "metrics.n_mc",
            "metrics.knn_k",
            "metrics.reference",
            "metrics.audit_s",
            "metrics.tilting_points",
            "sweep.dim",
            "sweep.jobs",
            "output.paths",
        ] {
            self.usize(key)?;
        }
        self.usize_list("metrics.s_levels")?;
        self.audit_b()?;
        self.f64("metrics.tilting_x")?;
        self.bool("output.plot")?;
        self.f64_list("sweep.r")?;
        self.usize_list("sweep.steps")?;
        self.usize_list("sweep.s")?;
        self.u64_list("sweep.seeds")?;
        self.f64("sweep.gaussian_var")?;
        self.f64("sweep.uniform_half_width")?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<VeSchedule> {
        VeSchedule::new(self.f64("schedule.sigma_max")?, self.f64("schedule.eps")?)
    }

    pub fn discrete_schedule(&self) -> Result<DiscreteSchedule> {
        DiscreteSchedule::make(self.usize("schedule.steps")?, self.f64("schedule.c")?)
    }

    pub fn target(&self) -> Result<TargetDensity> {
        let mean = self.f64_list("target.mean")?;
        let var = self.f64_list("target.var")?;
        let kind = self.get("target.kind");
        match kind {
            "gaussian" => Ok(DiagGaussian::new(mean, var)?.into()),
            "gaussian_mixture" => Ok(parse_mixture(self.get("target.mixture"))?.into()),
            "gaussian_uniform_product" => {
                let coords = self.usize_list("target.gaussian_coords")?;
                let bounds = self
                    .get("target.uniform_bounds")
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        let (lo, hi) = s
                            .split_once(':')
                            .ok_or_else(|| bad("target.uniform_bounds", s, "lo:hi"))?;
                        let lo = lo
                            .trim()
                            .parse()
                            .map_err(|_| bad("target.uniform_bounds", s, "lo:hi"))?;
                        let hi = hi
                            .trim()
                            .parse()
                            .map_err(|_| bad("target.uniform_bounds", s, "lo:hi"))?;
                        Ok((lo, hi))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()?;
                let dim = coords.len() + bounds.len();
                Ok(GaussianUniformProduct::from_parts(dim, &coords, &mean, &var, &bounds)?.into())
            }
            other => Err(bad(
                "target.kind",
                other,
                "gaussian, gaussian_mixture or gaussian_uniform_product",
            )),
        }
    }

    pub fn net(&self) -> Result<NetConfig> {
        Ok(NetConfig {
            hidden: self.usize_list("net.hidden")?,
            time_feat_dim: self.usize("net.time_feat_dim")?,
            fourier_scale: self.f64("net.fourier_scale")?,
            l1_radius: self.f64("net.l1_radius")?,
            output_cap: self.bool("net.output_cap")?,
            output_l1_cap: self.f64("net.output_l1_cap")?,
        })
    }

    pub fn weighting(&self) -> Result<Weighting> {
        match self.get("objective.weighting") {
            "none" => Ok(Weighting::None),
            "sigma2" => Ok(Weighting::Sigma2),
            other => Err(bad("objective.weighting", other, "none or sigma2")),
        }
    }

    /// Training settings as configured, ignoring the `r = 0` rule.
    pub fn train(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            r: self.f64("objective.r")?,
            epochs: self.usize("train.epochs")?,
            batch_size: self.usize("train.batch_size")?,
            learning_rate: self.f64("train.learning_rate")?,
            eps: self.f64("schedule.eps")?,
            seed: self.u64("train.seed")?,
            projection: self.bool("train.projection")?,
            kappa_init: self.f64("train.kappa_init")?,
            kappa_trainable: self.bool("train.kappa_trainable")?,
            weighting: self.weighting()?,
        })
    }

    /// Training and network settings for penalty `r`. With `r = 0` this is
    /// plain score matching: no projection, no output cap, `kappa = 1` fixed.
    pub fn method(&self, r: f64) -> Result<(TrainConfig, NetConfig)> {
        let train = TrainConfig { r, ..self.train()? };
        let net = self.net()?;
        if r == 0.0 {
            Ok((
                train.baseline(),
                NetConfig {
                    output_cap: false,
                    ..net
                },
            ))
        } else {
            Ok((train, net))
        }
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let mode = match self.get("sampler.mode") {
            "langevin" => StepMode::Langevin,
            "reverse_sde" => StepMode::ReverseSde,
            "snr" => StepMode::Snr {
                snr: self.f64("sampler.snr")?,
            },
            other => return Err(bad("sampler.mode", other, "langevin, snr or reverse_sde")),
        };
        Ok(SamplerConfig {
            steps: self.usize("sampler.steps")?,
            chains: self.usize("sampler.chains")?,
            eps: self.f64("schedule.eps")?,
            seed: self.u64("sampler.seed")?,
            record: self.bool("sampler.record")?,
            mode,
            noise: self.bool("sampler.noise")?,
        })
    }

    pub fn data_source(&self) -> Result<Option<(PathBuf, DataFormat)>> {
        let format: DataFormat = self.get("train.data_format").parse()?;
        let path = self.get("train.data");
        Ok((!path.is_empty()).then(|| (PathBuf::from(path), format)))
    }

    pub fn audit_b(&self) -> Result<Option<f64>> {
        match self.get("metrics.audit_b") {
            "auto" => Ok(None),
            _ => self.f64("metrics.audit_b").map(Some),
        }
    }
}

fn parse_mixture(text: &str) -> Result<GaussianMixture> {
    let key = "target.mixture";
    let comps = text
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|c| {
            let parts: Vec<&str> = c.split('|').collect();
            if parts.len() != 3 {
                return Err(bad(key, c, "weight | means | variances"));
            }
            let weight = parts[0].trim().parse().map_err(|_| bad(key, c, "a numeric weight"))?;
            let mean = parse_list(key, parts[1], "comma-separated means")?;
            let var = parse_list(key, parts[2], "comma-separated variances")?;
            Ok(MixtureComponent {
                weight,
                gaussian: DiagGaussian::new(mean, var)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(comps)
}
