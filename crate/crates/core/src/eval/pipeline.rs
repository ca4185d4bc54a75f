//! Turns an [`ExperimentConfig`] into library objects: masks, training sets,
//! score sources, simulated measurements and sampler settings. The CLI and
//! the end-to-end tests both go through here.
//!
//! Every random ingredient draws from its own fork of the run seed, so for
//! example changing the mask family does not change the sampler noise.

use std::path::Path;

use super::config::{ExperimentConfig, ScoreSource};
use super::phantom::{augment, synth_phantoms};
use crate::kspace::{forward, image_to_kspace, kspace_to_image, make_mask, Measurement, SamplingMask};
use crate::numerics::{read_array, ComplexImage, SeededRng};
use crate::sampler::{HankelConfig, SamplerConfig};
use crate::score::{
    subspace_score_adapter, train, Architecture, DenoiserModel, GaussianPrior, Representation, ScoreFunction,
    SubspaceGaussian, TrainConfig, TrainOutcome,
};
use crate::sde::{NoiseSchedule, Space, SubspaceMode};
use crate::{Error, Result};

const STREAM_MASK: u64 = 1;
const STREAM_PRIOR: u64 = 2;
const STREAM_TRUTH: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_SAMPLER: u64 = 5;
const STREAM_TRAIN: u64 = 6;

/// Independent random stream for one purpose of a run.
fn stream(cfg: &ExperimentConfig, label: u64) -> SeededRng {
    SeededRng::new(cfg.seed).fork(label)
}

pub fn sampler_rng(cfg: &ExperimentConfig) -> SeededRng {
    stream(cfg, STREAM_SAMPLER)
}

/// Sampler settings for a given schedule and subspace mode; everything else
/// comes from the config.
pub fn sampler_config(cfg: &ExperimentConfig, sched: NoiseSchedule, mode: SubspaceMode) -> SamplerConfig {
    let mut sc = SamplerConfig::new(sched, mode);
    sc.corrector_steps = cfg.corrector_steps;
    sc.corrector_snr = cfg.corrector_snr;
    sc.dc_lambda = cfg.dc_lambda;
    sc.dc_every = cfg.dc_every;
    sc.warm_start = cfg.warm_start;
    sc.record_timing = cfg.record_timing;
    if cfg.lowrank_window > 0 && cfg.lowrank_rank > 0 {
        sc.lowrank = Some(HankelConfig::new((cfg.lowrank_window, cfg.lowrank_window), cfg.lowrank_rank));
    }
    sc
}

/// The configured mask file, or a freshly generated mask.
pub fn build_mask(cfg: &ExperimentConfig) -> Result<SamplingMask> {
    match &cfg.mask {
        Some(path) => {
            let m = SamplingMask::from_image(&read_array(path)?)?;
            if m.shape() != (cfg.height, cfg.width) {
                return Err(Error::ShapeMismatch { expected: (cfg.height, cfg.width), found: m.shape() });
            }
            Ok(m)
        }
        None => make_mask(
            cfg.mask_family,
            (cfg.height, cfg.width),
            cfg.acceleration,
            cfg.acs,
            &mut stream(cfg, STREAM_MASK),
        ),
    }
}

/// Every `*.subk` file in `dir`, in file-name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<ComplexImage>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "subk"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .subk files in {}", dir.display())));
    }
    paths.iter().map(read_array).collect()
}

/// Image-domain training images: the dataset directory or `train_count`
/// synthetic phantoms, optionally augmented.
pub fn training_images(cfg: &ExperimentConfig) -> Result<Vec<ComplexImage>> {
    let base = match &cfg.dataset {
        Some(dir) => read_dataset(dir)?,
        None => synth_phantoms(cfg.train_count, (cfg.height, cfg.width), &mut stream(cfg, STREAM_TRAIN).fork(0))?,
    };
    for img in &base {
        if img.shape() != (cfg.height, cfg.width) {
            return Err(Error::ShapeMismatch { expected: (cfg.height, cfg.width), found: img.shape() });
        }
    }
    if cfg.augment {
        augment(&base)
    } else {
        Ok(base)
    }
}

fn subspace_representation(mode: SubspaceMode) -> Option<Representation> {
    match mode {
        SubspaceMode::Full => None,
        SubspaceMode::LlProjection => Some(Representation::LowBand),
        SubspaceMode::FourBand => Some(Representation::FourBand),
    }
}

pub struct TrainedModels {
    pub full: TrainOutcome,
    /// Present when the configured subspace mode needs a second model.
    pub sub: Option<TrainOutcome>,
}

/// Trains the primary model (`representation`) and, for subspace modes, the
/// matching subspace model on the same k-space training set.
pub fn train_models(cfg: &ExperimentConfig) -> Result<TrainedModels> {
    let data: Vec<ComplexImage> = training_images(cfg)?.iter().map(image_to_kspace).collect::<Result<_>>()?;
    let sched = cfg.schedule()?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        iterations: cfg.train_iterations,
        ..TrainConfig::default()
    };
    let shape = (cfg.height, cfg.width);
    let fit = |repr: Representation, label: u64| -> Result<TrainOutcome> {
        let mut rng = stream(cfg, STREAM_TRAIN).fork(label);
        let arch = Architecture::new(repr, shape, cfg.hidden, cfg.layers, cfg.skip)?.with_domain(cfg.domain);
        let model = DenoiserModel::new(arch, &mut rng)?;
        train(model, &data, &tc, &sched, &mut rng)
    };
    let full = fit(cfg.representation, 1)?;
    let sub = subspace_representation(cfg.subspace_mode).map(|r| fit(r, 2)).transpose()?;
    Ok(TrainedModels { full, sub })
}

/// Score functions for a run.
pub enum Scores {
    Prior { prior: GaussianPrior, sub: SubspaceGaussian },
    Models { full: DenoiserModel, sub: Option<DenoiserModel> },
}

impl Scores {
    pub fn full(&self) -> &dyn ScoreFunction {
        match self {
            Self::Prior { prior, .. } => prior,
            Self::Models { full, .. } => full,
        }
    }

    pub fn sub(&self) -> Option<&dyn ScoreFunction> {
        match self {
            Self::Prior { sub, .. } => Some(sub),
            Self::Models { sub, .. } => sub.as_ref().map(|m| m as &dyn ScoreFunction),
        }
    }

    pub fn prior(&self) -> Option<&GaussianPrior> {
        match self {
            Self::Prior { prior, .. } => Some(prior),
            Self::Models { .. } => None,
        }
    }
}

/// Isotropic Gaussian prior around `prior_mean` (k-space), or around the
/// k-space of one synthetic phantom drawn from the seed.
pub fn gaussian_prior(cfg: &ExperimentConfig) -> Result<GaussianPrior> {
    let mean = match &cfg.prior_mean {
        Some(path) => read_array(path)?,
        None => {
            let ph = synth_phantoms(1, (cfg.height, cfg.width), &mut stream(cfg, STREAM_PRIOR))?;
            image_to_kspace(&ph[0])?
        }
    };
    if mean.shape() != (cfg.height, cfg.width) {
        return Err(Error::ShapeMismatch { expected: (cfg.height, cfg.width), found: mean.shape() });
    }
    GaussianPrior::isotropic(mean, cfg.prior_variance)
}

fn check_checkpoint(model: &DenoiserModel, cfg: &ExperimentConfig, space: Space, what: &str) -> Result<()> {
    let arch = model.architecture();
    let expected = Architecture::new(arch.representation, (cfg.height, cfg.width), arch.hidden, arch.layers, arch.skip)?;
    if arch.grid != expected.grid {
        return Err(Error::Config(format!(
            "{what} runs on a {}x{} grid, a {}x{} config needs {}x{}",
            arch.grid.0, arch.grid.1, cfg.height, cfg.width, expected.grid.0, expected.grid.1
        )));
    }
    if arch.representation.space() != space {
        return Err(Error::Config(format!(
            "{what} has representation {}, which does not fit this slot",
            arch.representation
        )));
    }
    if let Some(trained) = model.schedule() {
        let tol = 1e-9;
        if cfg.sigma_min < trained.sigma_min() * (1.0 - tol) || cfg.sigma_max > trained.sigma_max() * (1.0 + tol) {
            return Err(Error::Config(format!(
                "{what} was trained for sigma in [{}, {}], config asks for [{}, {}]",
                trained.sigma_min(),
                trained.sigma_max(),
                cfg.sigma_min,
                cfg.sigma_max
            )));
        }
    }
    Ok(())
}

/// Loads the score source named by `score`, checking that checkpoints fit
/// the grid, the subspace mode and the noise range.
pub fn load_scores(cfg: &ExperimentConfig) -> Result<Scores> {
    match cfg.score {
        ScoreSource::Prior => {
            let prior = gaussian_prior(cfg)?;
            let sub = subspace_score_adapter(&prior)?;
            Ok(Scores::Prior { prior, sub })
        }
        ScoreSource::Checkpoint => {
            let path = cfg
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("score = checkpoint needs the checkpoint key".into()))?;
            let full = DenoiserModel::load(path)?;
            check_checkpoint(&full, cfg, Space::Full, "checkpoint")?;
            let sub = match (&cfg.checkpoint_sub, subspace_representation(cfg.subspace_mode)) {
                (_, None) => None,
                (None, Some(_)) => {
                    return Err(Error::Config(format!(
                        "subspace_mode = {} needs the checkpoint_sub key",
                        cfg.subspace_mode
                    )))
                }
                (Some(p), Some(want)) => {
                    let m = DenoiserModel::load(p)?;
                    check_checkpoint(&m, cfg, Space::Subspace, "checkpoint_sub")?;
                    if m.architecture().representation != want {
                        return Err(Error::Config(format!(
                            "subspace_mode = {} needs a {want} checkpoint, got {}",
                            cfg.subspace_mode,
                            m.architecture().representation
                        )));
                    }
                    Some(m)
                }
            };
            Ok(Scores::Models { full, sub })
        }
    }
}

/// A measurement plus the image-domain ground truth when known.
pub struct Problem {
    pub measurement: Measurement,
    pub ground_truth: Option<ComplexImage>,
}

/// Builds the measurement for a run, in order of preference:
/// 1. `measurement` (k-space, must vanish off the mask) with the mask from
///    `mask`; `ground_truth` is then only used for metrics;
/// 2. `ground_truth` pushed through the forward model;
/// 3. with a Gaussian prior, a ground truth sampled from that prior.
pub fn build_problem(cfg: &ExperimentConfig, scores: &Scores) -> Result<Problem> {
    let truth = match &cfg.ground_truth {
        Some(p) => {
            let gt = read_array(p)?;
            if gt.shape() != (cfg.height, cfg.width) {
                return Err(Error::ShapeMismatch { expected: (cfg.height, cfg.width), found: gt.shape() });
            }
            Some(gt)
        }
        None => None,
    };
    if let Some(p) = &cfg.measurement {
        if cfg.mask.is_none() {
            return Err(Error::Config("a measurement file needs the mask key".into()));
        }
        let mask = build_mask(cfg)?;
        let measurement = Measurement::new(read_array(p)?, mask, cfg.measurement_noise)?;
        return Ok(Problem { measurement, ground_truth: truth });
    }
    let truth = match (truth, scores.prior()) {
        (Some(gt), _) => gt,
        (None, Some(prior)) => kspace_to_image(&prior.sample(&mut stream(cfg, STREAM_TRUTH)))?,
        (None, None) => {
            return Err(Error::Config("reconstruction needs the ground_truth or measurement key".into()))
        }
    };
    let mask = build_mask(cfg)?;
    let measurement = forward(
        &image_to_kspace(&truth)?,
        &mask,
        cfg.measurement_noise,
        &mut stream(cfg, STREAM_NOISE),
    )?;
    Ok(Problem { measurement, ground_truth: Some(truth) })
}
