//! Flat key=value experiment files plus command-line overrides.
//!
//! A config file is a sequence of `key = value` lines. Blank lines and lines
//! starting with `#` are skipped. Keys are checked against a fixed schema and
//! anything unknown is rejected before any computation starts, so a typo in a
//! long experiment file fails fast with a config error instead of silently
//! running with a default. Command-line flags override file values, which
//! override built-in defaults; each subcommand fills in the defaults it needs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::{GaussianMeasure, GaussianMixture};

use super::RunArgs;

/// Which flow family an orbit command traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Time-t map of the variance-shrinking ODE flow.
    Continuous,
    /// Single denoising map at bandwidth t.
    Ordinary,
    /// Self-composition of empirical denoising maps, one per tau step.
    Composed,
}

/// Synthesis target for the ridgelet report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisTarget {
    /// Gaussian bump, the standard nontrivial reconstruction exercise.
    Bump,
    /// Zero function; every error in the report must come out exactly zero.
    Zero,
}

/// Base measure an experiment runs on.
#[derive(Debug, Clone)]
pub enum DistributionSpec {
    Gaussian(GaussianMeasure),
    Mixture(GaussianMixture),
    /// Two-dimensional spiral cloud; `n` and `noise` control the draw.
    SwissRoll,
}

/// Everything a subcommand can be told. Fields are optional where the
/// per-command default depends on the command; `resolve` only merges sources.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub distribution: Option<DistributionSpec>,
    pub mode: Option<Mode>,
    pub tau: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_per_axis: Option<usize>,
    pub n_samples: Option<usize>,
    pub train: bool,
    pub target: Option<SynthesisTarget>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub t_noise: Option<f64>,
    pub n: Option<usize>,
    pub noise: Option<f64>,
}

/// Raw distribution fields accumulated during file parsing. The measure is
/// built only after the whole file is read, so key order never matters.
#[derive(Default)]
struct DistributionBuilder {
    kind: Option<String>,
    mean: Option<Vec<f64>>,
    cov: Option<Vec<f64>>,
    components: Vec<(Option<f64>, Option<Vec<f64>>, Option<Vec<f64>>)>,
}

impl DistributionBuilder {
    fn component_mut(
        &mut self,
        idx: usize,
    ) -> &mut (Option<f64>, Option<Vec<f64>>, Option<Vec<f64>>) {
        if idx >= self.components.len() {
            self.components.resize_with(idx + 1, Default::default);
        }
        &mut self.components[idx]
    }

    fn is_empty(&self) -> bool {
        self.kind.is_none()
            && self.mean.is_none()
            && self.cov.is_none()
            && self.components.is_empty()
    }

    fn build(self) -> Result<Option<DistributionSpec>> {
        if self.is_empty() {
            return Ok(None);
        }
        let kind = self
            .kind
            .ok_or_else(|| config_err("distribution fields given without a 'distribution' key"))?;
        match kind.as_str() {
            "gaussian" => {
                let mean = self
                    .mean
                    .ok_or_else(|| config_err("distribution=gaussian needs a 'mean' key"))?;
                let cov = self
                    .cov
                    .ok_or_else(|| config_err("distribution=gaussian needs a 'cov' key"))?;
                let g = gaussian_from_lists(&mean, &cov)?;
                Ok(Some(DistributionSpec::Gaussian(g)))
            }
            "gmm" => {
                if self.components.is_empty() {
                    return Err(config_err(
                        "distribution=gmm needs weight.K/mean.K/cov.K entries",
                    ));
                }
                let mut weights = Vec::new();
                let mut comps = Vec::new();
                for (idx, (w, mean, cov)) in self.components.into_iter().enumerate() {
                    let w = w.ok_or_else(|| config_err(format!("missing weight.{idx}")))?;
                    let mean = mean.ok_or_else(|| config_err(format!("missing mean.{idx}")))?;
                    let cov = cov.ok_or_else(|| config_err(format!("missing cov.{idx}")))?;
                    weights.push(w);
                    comps.push(gaussian_from_lists(&mean, &cov)?);
                }
                let gmm = GaussianMixture::new(weights, comps)
                    .map_err(|e| config_err(format!("invalid mixture: {e}")))?;
                Ok(Some(DistributionSpec::Mixture(gmm)))
            }
            "swissroll" => Ok(Some(DistributionSpec::SwissRoll)),
            other => Err(config_err(format!(
                "unknown distribution '{other}' (expected gaussian, gmm, or swissroll)"
            ))),
        }
    }
}

/// Builds a Gaussian from a mean list and a row-major covariance list. A
/// bad shape or a non-PSD matrix is a config mistake here, not a numeric
/// failure, so measure errors are remapped.
fn gaussian_from_lists(mean: &[f64], cov: &[f64]) -> Result<GaussianMeasure> {
    let d = mean.len();
    if cov.len() != d * d {
        return Err(config_err(format!(
            "cov has {} entries, expected {} for a {d}-dimensional mean",
            cov.len(),
            d * d
        )));
    }
    let mu = DVector::from_column_slice(mean);
    let sigma = DMatrix::from_row_slice(d, d, cov);
    GaussianMeasure::new(mu, sigma).map_err(|e| config_err(format!("invalid gaussian: {e}")))
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| config_err(format!("{key}: expected a number, got '{v}'")))
        .and_then(|x| {
            if x.is_finite() {
                Ok(x)
            } else {
                Err(config_err(format!("{key}: value must be finite")))
            }
        })
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| config_err(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| config_err(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|item| parse_f64(key, item.trim()))
        .collect()
}

fn parse_mode(v: &str) -> Result<Mode> {
    match v {
        "continuous" => Ok(Mode::Continuous),
        "ordinary" => Ok(Mode::Ordinary),
        "composed" => Ok(Mode::Composed),
        _ => Err(config_err(format!(
            "mode: expected continuous, ordinary, or composed, got '{v}'"
        ))),
    }
}

fn parse_target(v: &str) -> Result<SynthesisTarget> {
    match v {
        "bump" => Ok(SynthesisTarget::Bump),
        "zero" => Ok(SynthesisTarget::Zero),
        _ => Err(config_err(format!("target: expected bump or zero, got '{v}'"))),
    }
}

/// Splits `weight.3` style keys into (field, index).
fn indexed_key(key: &str) -> Option<(&str, usize)> {
    let (field, idx) = key.split_once('.')?;
    let idx = idx.parse::<usize>().ok()?;
    matches!(field, "weight" | "mean" | "cov").then_some((field, idx))
}

/// Parses one file into a config. Every key is validated here; commands can
/// assume any present value is well-formed.
pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::default();
    let mut dist = DistributionBuilder::default();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_err(format!("line {}: expected key=value", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "distribution" => dist.kind = Some(value.to_string()),
            "mean" => dist.mean = Some(parse_f64_list(key, value)?),
            "cov" => dist.cov = Some(parse_f64_list(key, value)?),
            "mode" => cfg.mode = Some(parse_mode(value)?),
            "tau" => cfg.tau = Some(parse_f64(key, value)?),
            "taus" => cfg.taus = Some(parse_f64_list(key, value)?),
            "t_max" => cfg.t_max = Some(parse_f64(key, value)?),
            "dt" => cfg.dt = Some(parse_f64(key, value)?),
            "seed" => cfg.seed = parse_u64(key, value)?,
            "out" => cfg.out = Some(PathBuf::from(value)),
            "grid_lo" => cfg.grid_lo = Some(parse_f64(key, value)?),
            "grid_hi" => cfg.grid_hi = Some(parse_f64(key, value)?),
            "grid_per_axis" => cfg.grid_per_axis = Some(parse_usize(key, value)?),
            "n_samples" => cfg.n_samples = Some(parse_usize(key, value)?),
            "train" => cfg.train = parse_bool(key, value)?,
            "target" => cfg.target = Some(parse_target(value)?),
            "hidden" => cfg.hidden = Some(parse_usize(key, value)?),
            "epochs" => cfg.epochs = Some(parse_usize(key, value)?),
            "lr" => cfg.lr = Some(parse_f64(key, value)?),
            "t_noise" => cfg.t_noise = Some(parse_f64(key, value)?),
            "n" => cfg.n = Some(parse_usize(key, value)?),
            "noise" => cfg.noise = Some(parse_f64(key, value)?),
            _ => {
                if let Some((field, idx)) = indexed_key(key) {
                    let slot = dist.component_mut(idx);
                    match field {
                        "weight" => slot.0 = Some(parse_f64(key, value)?),
                        "mean" => slot.1 = Some(parse_f64_list(key, value)?),
                        "cov" => slot.2 = Some(parse_f64_list(key, value)?),
                        _ => unreachable!(),
                    }
                } else {
                    return Err(config_err(format!("unknown key '{key}'")));
                }
            }
        }
    }

    cfg.distribution = dist.build()?;
    Ok(cfg)
}

/// File config (if any) with command-line overrides folded in, plus the
/// cheap global validations that do not depend on the subcommand.
pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(mode) = args.mode {
        cfg.mode = Some(mode);
    }
    if let Some(tau) = args.tau {
        cfg.tau = Some(tau);
    }
    if let Some(t_max) = args.t_max {
        cfg.t_max = Some(t_max);
    }
    if let Some(dt) = args.dt {
        cfg.dt = Some(dt);
    }
    if args.train {
        cfg.train = true;
    }

    for (name, v) in [("tau", cfg.tau), ("dt", cfg.dt)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be positive, got {v}")));
            }
        }
    }
    if let Some(t_max) = cfg.t_max {
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(config_err(format!("t_max must be nonnegative, got {t_max}")));
        }
    }
    if let Some(taus) = &cfg.taus {
        if taus.is_empty() {
            return Err(config_err("taus must list at least one step size"));
        }
        for &tau in taus {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(config_err(format!("taus entries must be positive, got {tau}")));
            }
        }
    }
    if let Some(lr) = cfg.lr {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(config_err(format!("lr must be positive, got {lr}")));
        }
    }
    if let Some(t_noise) = cfg.t_noise {
        if !(t_noise >= 0.0 && t_noise.is_finite()) {
            return Err(config_err(format!("t_noise must be nonnegative, got {t_noise}")));
        }
    }
    if let Some(noise) = cfg.noise {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(config_err(format!("noise must be nonnegative, got {noise}")));
        }
    }
    Ok(cfg)
}
