//! Flat `key = value` experiment configuration.
//!
//! Every tunable of the pipeline lives in one struct. Files contain one
//! assignment per line, `#` starts a comment, and unknown keys are errors.
//! The same keys can be overridden from the command line and the seed from
//! the `SUBDM_SEED` environment variable. [`ExperimentConfig::to_manifest`]
//! writes every resolved value back out in the same format, so a manifest
//! can be fed straight back in as a config.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::kspace::MaskFamily;
use crate::score::{Domain, Representation, Skip};
use crate::sde::{NoiseSchedule, SubspaceMode, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN, DEFAULT_STEPS};
use crate::{Error, Result};

pub const SEED_ENV: &str = "SUBDM_SEED";

/// Where scores come from during reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreSource {
    /// Closed-form Gaussian prior (`prior_mean`, `prior_variance`).
    Prior,
    /// Trained denoiser checkpoints (`checkpoint`, `checkpoint_sub`).
    Checkpoint,
}

impl FromStr for ScoreSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(Self::Prior),
            "checkpoint" => Ok(Self::Checkpoint),
            _ => Err(Error::Config(format!("unknown score source {s:?} (prior, checkpoint)"))),
        }
    }
}

impl std::fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Prior => "prior",
            Self::Checkpoint => "checkpoint",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,

    pub mask_family: MaskFamily,
    pub acceleration: f64,
    pub acs: usize,
    /// Load the mask from this SUBK1 file instead of generating one.
    pub mask: Option<PathBuf>,
    pub measurement_noise: f64,

    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_steps: usize,
    /// `None` (written `auto`) runs the whole schedule in the full space.
    pub m_split: Option<usize>,

    pub corrector_steps: usize,
    pub corrector_snr: f64,
    pub dc_lambda: f64,
    pub dc_every: usize,
    pub subspace_mode: SubspaceMode,
    pub warm_start: bool,
    /// Hankel refinement is off when either is zero.
    pub lowrank_window: usize,
    pub lowrank_rank: usize,
    pub record_timing: bool,

    pub score: ScoreSource,
    pub prior_mean: Option<PathBuf>,
    pub prior_variance: f64,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_sub: Option<PathBuf>,

    /// Directory of image-domain SUBK1 files; synthetic phantoms when unset.
    pub dataset: Option<PathBuf>,
    pub train_count: usize,
    pub augment: bool,
    pub representation: Representation,
    pub domain: Domain,
    pub hidden: usize,
    pub layers: usize,
    pub skip: Skip,
    pub train_iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,

    /// Image-domain ground truth for metrics and for simulating a measurement.
    pub ground_truth: Option<PathBuf>,
    /// Measured k-space; simulated from `ground_truth` when unset.
    pub measurement: Option<PathBuf>,

    /// Step count and split of the subspace run in `convergence`.
    pub sub_n_steps: usize,
    pub sub_m_split: usize,

    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 32,
            width: 32,
            mask_family: MaskFamily::Uniform1d,
            acceleration: 4.0,
            acs: 0,
            mask: None,
            measurement_noise: 0.0,
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
            n_steps: DEFAULT_STEPS,
            m_split: None,
            corrector_steps: 1,
            corrector_snr: 0.16,
            dc_lambda: 0.0,
            dc_every: 1,
            subspace_mode: SubspaceMode::LlProjection,
            warm_start: false,
            lowrank_window: 0,
            lowrank_rank: 0,
            record_timing: false,
            score: ScoreSource::Prior,
            prior_mean: None,
            prior_variance: 1.0,
            checkpoint: None,
            checkpoint_sub: None,
            dataset: None,
            train_count: 200,
            augment: false,
            representation: Representation::Full,
            domain: Domain::Kspace,
            hidden: 16,
            layers: 4,
            skip: Skip::Gaussian,
            train_iterations: 400,
            batch_size: 8,
            learning_rate: 2e-3,
            ground_truth: None,
            measurement: None,
            sub_n_steps: 200,
            sub_m_split: 100,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?} for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed", "height", "width", "mask_family", "acceleration", "acs", "mask",
        "measurement_noise", "sigma_min", "sigma_max", "n_steps", "m_split",
        "corrector_steps", "corrector_snr", "dc_lambda", "dc_every", "subspace_mode",
        "warm_start", "lowrank_window", "lowrank_rank", "record_timing", "score",
        "prior_mean", "prior_variance", "checkpoint", "checkpoint_sub", "dataset",
        "train_count", "augment", "representation", "domain", "hidden", "layers", "skip",
        "train_iterations", "batch_size", "learning_rate", "ground_truth", "measurement",
        "sub_n_steps", "sub_m_split", "output_dir",
    ];

    /// Assigns one key. Values are trimmed; `none` clears optional paths
    /// and `auto` clears `m_split`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "mask_family" => self.mask_family = parse(key, v)?,
            "acceleration" => self.acceleration = parse(key, v)?,
            "acs" => self.acs = parse(key, v)?,
            "mask" => self.mask = parse_opt_path(v),
            "measurement_noise" => self.measurement_noise = parse(key, v)?,
            "sigma_min" => self.sigma_min = parse(key, v)?,
            "sigma_max" => self.sigma_max = parse(key, v)?,
            "n_steps" => self.n_steps = parse(key, v)?,
            "m_split" => self.m_split = if v == "auto" { None } else { Some(parse(key, v)?) },
            "corrector_steps" => self.corrector_steps = parse(key, v)?,
            "corrector_snr" => self.corrector_snr = parse(key, v)?,
            "dc_lambda" => self.dc_lambda = parse(key, v)?,
            "dc_every" => self.dc_every = parse(key, v)?,
            "subspace_mode" => self.subspace_mode = parse(key, v)?,
            "warm_start" => self.warm_start = parse_bool(key, v)?,
            "lowrank_window" => self.lowrank_window = parse(key, v)?,
            "lowrank_rank" => self.lowrank_rank = parse(key, v)?,
            "record_timing" => self.record_timing = parse_bool(key, v)?,
            "score" => self.score = v.parse()?,
            "prior_mean" => self.prior_mean = parse_opt_path(v),
            "prior_variance" => self.prior_variance = parse(key, v)?,
            "checkpoint" => self.checkpoint = parse_opt_path(v),
            "checkpoint_sub" => self.checkpoint_sub = parse_opt_path(v),
            "dataset" => self.dataset = parse_opt_path(v),
            "train_count" => self.train_count = parse(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "representation" => self.representation = parse(key, v)?,
            "domain" => self.domain = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "skip" => self.skip = parse(key, v)?,
            "train_iterations" => self.train_iterations = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "ground_truth" => self.ground_truth = parse_opt_path(v),
            "measurement" => self.measurement = parse_opt_path(v),
            "sub_n_steps" => self.sub_n_steps = parse(key, v)?,
            "sub_m_split" => self.sub_m_split = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Value of a key formatted as it appears in a manifest.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "seed" => self.seed.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "mask_family" => self.mask_family.to_string(),
            "acceleration" => self.acceleration.to_string(),
            "acs" => self.acs.to_string(),
            "mask" => show_path(&self.mask),
            "measurement_noise" => self.measurement_noise.to_string(),
            "sigma_min" => self.sigma_min.to_string(),
            "sigma_max" => self.sigma_max.to_string(),
            "n_steps" => self.n_steps.to_string(),
            "m_split" => self.m_split.map_or_else(|| "auto".into(), |m| m.to_string()),
            "corrector_steps" => self.corrector_steps.to_string(),
            "corrector_snr" => self.corrector_snr.to_string(),
            "dc_lambda" => self.dc_lambda.to_string(),
            "dc_every" => self.dc_every.to_string(),
            "subspace_mode" => self.subspace_mode.to_string(),
            "warm_start" => self.warm_start.to_string(),
            "lowrank_window" => self.lowrank_window.to_string(),
            "lowrank_rank" => self.lowrank_rank.to_string(),
            "record_timing" => self.record_timing.to_string(),
            "score" => self.score.to_string(),
            "prior_mean" => show_path(&self.prior_mean),
            "prior_variance" => self.prior_variance.to_string(),
            "checkpoint" => show_path(&self.checkpoint),
            "checkpoint_sub" => show_path(&self.checkpoint_sub),
            "dataset" => show_path(&self.dataset),
            "train_count" => self.train_count.to_string(),
            "augment" => self.augment.to_string(),
            "representation" => self.representation.to_string(),
            "domain" => self.domain.to_string(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "skip" => self.skip.to_string(),
            "train_iterations" => self.train_iterations.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "ground_truth" => show_path(&self.ground_truth),
            "measurement" => show_path(&self.measurement),
            "sub_n_steps" => self.sub_n_steps.to_string(),
            "sub_m_split" => self.sub_m_split.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        })
    }

    /// Parses config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Reads a file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&absolute(&base)?);
        Ok(cfg)
    }

    /// Applies `--key value` pairs (or `--key=value`) in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        let mut it = args.iter().map(AsRef::as_ref);
        while let Some(arg) = it.next() {
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("expected --key, got {arg:?}")))?;
            if let Some((k, v)) = key.split_once('=') {
                self.set(k, v)?;
            } else {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("missing value for --{key}")))?;
                self.set(key, v)?;
            }
        }
        Ok(())
    }

    /// Applies `SUBDM_SEED` from the given lookup (the process environment
    /// in the CLI).
    pub fn apply_seed_env(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = parse(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    /// Makes every path absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.mask,
            &mut self.prior_mean,
            &mut self.checkpoint,
            &mut self.checkpoint_sub,
            &mut self.dataset,
            &mut self.ground_truth,
            &mut self.measurement,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Range checks that do not need any files.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.acceleration >= 1.0) {
            return bad(format!("acceleration must be >= 1, got {}", self.acceleration));
        }
        if !(self.corrector_snr > 0.0) {
            return bad(format!("corrector_snr must be positive, got {}", self.corrector_snr));
        }
        if !(self.dc_lambda >= 0.0) {
            return bad(format!("dc_lambda must be non-negative, got {}", self.dc_lambda));
        }
        if self.dc_every == 0 {
            return bad("dc_every must be at least 1".into());
        }
        if !(self.measurement_noise >= 0.0) || !(self.prior_variance > 0.0) {
            return bad("measurement_noise must be >= 0 and prior_variance > 0".into());
        }
        if (self.lowrank_window == 0) != (self.lowrank_rank == 0) {
            return bad("lowrank_window and lowrank_rank must both be set or both be 0".into());
        }
        self.schedule()?;
        if self.sub_m_split > self.sub_n_steps {
            return bad("sub_m_split exceeds sub_n_steps".into());
        }
        Ok(())
    }

    /// Noise schedule with an explicit split, or `m_split = N` (no subspace
    /// phase) when the split is left on `auto`.
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(
            self.sigma_min,
            self.sigma_max,
            self.n_steps,
            self.m_split.unwrap_or(self.n_steps),
        )
    }

    /// Every key in canonical order, one `key = value` per line.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key).expect("KEYS lists only known keys");
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(p))
    }
}
