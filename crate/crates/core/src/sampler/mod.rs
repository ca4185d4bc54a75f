//! Reverse-time predictor-corrector reconstruction.
//!
//! The chain starts from noise at `sigma_max`, runs in the wavelet subspace
//! while the step index is at or above the schedule's split, hands off to
//! full k-space once and continues down to `sigma_min`. Data consistency is
//! enforced every `dc_every` steps and once more at the end, after the
//! optional Hankel refinement.

mod hankel;
mod steps;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub use hankel::{hankel_average, hankel_lowrank, hankel_matrix, hankel_singular_values, HankelConfig};
pub use steps::{
    consistency_objective, corrector, corrector_full, corrector_sub, data_consistency, predictor,
    predictor_full, predictor_sub, Corrected,
};

use crate::eval::{psnr, ssim};
use crate::kspace::{kspace_to_image, Measurement};
use crate::numerics::{write_atomic, ComplexImage, SeededRng};
use crate::score::ScoreFunction;
use crate::sde::{NoiseSchedule, Space, StateValue, SubspaceMode};
use crate::wavelet::{dwt, idwt, WaveletBands};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub sched: NoiseSchedule,
    pub corrector_steps: usize,
    pub corrector_snr: f64,
    pub dc_lambda: f64,
    pub dc_every: usize,
    pub subspace_mode: SubspaceMode,
    pub lowrank: Option<HankelConfig>,
    /// Start from the measurement plus noise instead of pure noise.
    pub warm_start: bool,
    /// Fill the `elapsed_ms` column; off by default so records are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl SamplerConfig {
    pub fn new(sched: NoiseSchedule, subspace_mode: SubspaceMode) -> Self {
        Self {
            sched,
            corrector_steps: 1,
            corrector_snr: 0.16,
            dc_lambda: 0.0,
            dc_every: 1,
            subspace_mode,
            lowrank: None,
            warm_start: false,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.corrector_snr > 0.0) {
            return Err(Error::Parameter(format!("corrector snr must be positive, got {}", self.corrector_snr)));
        }
        if !(self.dc_lambda >= 0.0) {
            return Err(Error::Parameter(format!("dc lambda must be >= 0, got {}", self.dc_lambda)));
        }
        if self.dc_every == 0 {
            return Err(Error::Parameter("dc_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether any step runs in the subspace.
    pub fn uses_subspace(&self) -> bool {
        self.subspace_mode != SubspaceMode::Full && self.sched.m_split() < self.sched.n_steps()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Index of the level reached by this predictor step.
    pub step: usize,
    pub sigma: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub elapsed_ms: f64,
    /// Cumulative complex entries passed to score evaluations.
    pub score_ops: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconRecord {
    pub steps: Vec<StepRecord>,
    pub corrector_skips: usize,
    pub score_ops: u64,
}

impl ReconRecord {
    pub const CSV_HEADER: &'static str = "step,sigma,psnr,ssim,elapsed_ms";

    pub fn final_psnr(&self) -> Option<f64> {
        self.steps.last().and_then(|s| s.psnr)
    }

    /// Missing metrics are written as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for s in &self.steps {
            let _ = writeln!(out, "{},{:e},{},{},{:.3}", s.step, s.sigma, opt(s.psnr), opt(s.ssim), s.elapsed_ms);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Lifts a state to full k-space. Four-band states are exact; LL-only
/// states get fresh noise of `sigma` in the missing bands when a generator
/// is given, zeros otherwise.
fn lift(state: &StateValue, sigma: f64, rng: Option<&mut SeededRng>) -> Result<ComplexImage> {
    match (state, rng) {
        (StateValue::LowBand(ll), Some(rng)) => {
            let mut bands = WaveletBands::noise(ll.shape(), sigma, rng)?;
            bands.ll = ll.clone();
            idwt(&bands)
        }
        _ => state.to_full(),
    }
}

fn project(k: &ComplexImage, like: &StateValue) -> Result<StateValue> {
    Ok(match like {
        StateValue::Full(_) => StateValue::Full(k.clone()),
        StateValue::FourBand(_) => StateValue::FourBand(dwt(k)?),
        StateValue::LowBand(_) => StateValue::LowBand(dwt(k)?.ll),
    })
}

fn initial_state(meas: &Measurement, cfg: &SamplerConfig, rng: &mut SeededRng) -> Result<StateValue> {
    let (h, w) = meas.data.shape();
    let sigma = cfg.sched.sigma_max();
    let mut k = crate::numerics::gaussian_noise(rng, h, w, sigma)?;
    if cfg.warm_start {
        k = k.add(&meas.data)?;
    }
    if !cfg.uses_subspace() {
        return Ok(StateValue::Full(k));
    }
    let b = dwt(&k)?;
    Ok(match cfg.subspace_mode {
        SubspaceMode::FourBand => StateValue::FourBand(b),
        SubspaceMode::LlProjection => StateValue::LowBand(b.ll),
        SubspaceMode::Full => unreachable!("checked by uses_subspace"),
    })
}

fn check_finite(state: &StateValue, step: usize) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state diverged at step {step}")))
    }
}

/// Runs the full reverse chain and returns the final k-space estimate.
///
/// `score_sub` is required when the configuration has a subspace phase.
/// With `ground_truth` (image domain) each step records PSNR and SSIM of the
/// data-consistent estimate.
pub fn reconstruct(
    meas: &Measurement,
    score_full: &dyn ScoreFunction,
    score_sub: Option<&dyn ScoreFunction>,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
    ground_truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, ReconRecord)> {
    cfg.validate()?;
    meas.mask.check_shape(&meas.data)?;
    if let Some(gt) = ground_truth {
        gt.check_same_shape(&meas.data)?;
    }
    if let Some(hk) = &cfg.lowrank {
        hk.validate(meas.data.shape())?;
    }
    let sched = &cfg.sched;
    let score_sub = match (cfg.uses_subspace(), score_sub) {
        (true, None) => {
            return Err(Error::Parameter("a subspace score is required for this configuration".into()))
        }
        (_, s) => s,
    };

    let start = Instant::now();
    let mut record = ReconRecord::default();
    let mut state = initial_state(meas, cfg, rng)?;
    let n = sched.n_steps();

    for i in (1..n).rev() {
        let j = i - 1;
        let sigma_j = sched.sigma_at(j)?;
        if state.space() == Space::Subspace && j < sched.m_split() {
            state = StateValue::Full(lift(&state, sched.sigma_at(i)?, Some(rng))?);
        }
        let score: &dyn ScoreFunction = match state.space() {
            Space::Full => score_full,
            Space::Subspace => score_sub.expect("checked above"),
        };
        state = predictor(&state, score, sched, i, Some(rng))?;
        record.score_ops += state.len() as u64;
        if cfg.corrector_steps > 0 {
            let c = corrector(&state, score, sigma_j, cfg.corrector_steps, cfg.corrector_snr, rng)?;
            record.score_ops += (cfg.corrector_steps * state.len()) as u64;
            record.corrector_skips += c.skipped;
            state = c.value;
        }
        check_finite(&state, j)?;
        if (n - 1 - j).is_multiple_of(cfg.dc_every) {
            state = match &state {
                StateValue::Full(k) => StateValue::Full(data_consistency(k, meas, cfg.dc_lambda)?),
                sub => {
                    let full = lift(sub, sigma_j, Some(rng))?;
                    project(&data_consistency(&full, meas, cfg.dc_lambda)?, sub)?
                }
            };
        }

        let (p, s) = match ground_truth {
            Some(gt) => {
                let est = data_consistency(&lift(&state, sigma_j, None)?, meas, cfg.dc_lambda)?;
                let img = kspace_to_image(&est)?;
                (Some(psnr(gt, &img)?), Some(ssim(gt, &img)?))
            }
            None => (None, None),
        };
        record.steps.push(StepRecord {
            step: j,
            sigma: sigma_j,
            psnr: p,
            ssim: s,
            elapsed_ms: if cfg.record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
            score_ops: record.score_ops,
        });
    }

    let mut k = match &state {
        StateValue::Full(k) => k.clone(),
        sub => lift(sub, sched.sigma_min(), Some(rng))?,
    };
    if let Some(hk) = &cfg.lowrank {
        k = hankel_lowrank(&k, hk)?;
    }
    let k = data_consistency(&k, meas, cfg.dc_lambda)?;
    if !k.is_finite() {
        return Err(Error::NonFinite("final estimate".into()));
    }
    if let (Some(gt), Some(last)) = (ground_truth, record.steps.last_mut()) {
        let img = kspace_to_image(&k)?;
        last.psnr = Some(psnr(gt, &img)?);
        last.ssim = Some(ssim(gt, &img)?);
    }
    Ok((k, record))
}
