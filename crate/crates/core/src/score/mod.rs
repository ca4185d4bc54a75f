//! Score functions: exact Gaussian scores for verification and a small
//! convolutional denoiser trained by denoising score matching.
//!
//! Scores use the complex convention `s = (d/d re + i d/d im) log p / 2`,
//! which makes the Gaussian score `-(k - mean) / (variance + sigma^2)` and
//! matches complex noise with unit total variance per entry.

mod denoiser;
mod gaussian;
mod train;

pub use denoiser::{Architecture, DenoiserModel, Domain, Representation, Skip, CHECKPOINT_MAGIC};
pub use gaussian::{gaussian_score, subspace_score_adapter, GaussianPrior, SubspaceGaussian};
pub use train::{train, TrainConfig, TrainOutcome};

use crate::numerics::SeededRng;
use crate::sde::{NoiseSchedule, Space, StateValue};
use crate::{Error, Result};

pub trait ScoreFunction {
    /// Score of the sigma-smoothed density at `state`; same layout as `state`.
    fn evaluate(&self, state: &StateValue, sigma: f64) -> Result<StateValue>;

    fn space(&self) -> Space;

    fn describe(&self) -> String;
}

impl<T: ScoreFunction + ?Sized> ScoreFunction for &T {
    fn evaluate(&self, state: &StateValue, sigma: f64) -> Result<StateValue> {
        (**self).evaluate(state, sigma)
    }
    fn space(&self) -> Space {
        (**self).space()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// One noised training example: `k_t = k_0 + z`, `z` with total variance `v`.
pub(crate) struct DsmDraw {
    pub sigma: f64,
    pub variance: f64,
    pub noise: StateValue,
    pub noised: StateValue,
}

/// Draws the noise level index uniformly from `1..N` (index 0 has zero
/// kernel variance) and perturbs `k0` with the VE kernel at that level.
pub(crate) fn dsm_draw(k0: &StateValue, sched: &NoiseSchedule, rng: &mut SeededRng) -> Result<DsmDraw> {
    let i = 1 + rng.below(sched.n_steps() - 1);
    let variance = sched.kernel_variance(i)?;
    if !(variance > 0.0) {
        return Err(Error::Parameter(format!("zero kernel variance at step {i}")));
    }
    let noise = k0.noise_like(variance.sqrt(), rng)?;
    let mut noised = k0.clone();
    noised.axpy(1.0, &noise)?;
    Ok(DsmDraw { sigma: sched.sigma_at(i)?, variance, noise, noised })
}

/// Denoising score matching loss with weight `lambda_t = sigma_i^2 - sigma_0^2`:
/// the batch mean of `v * mean |s(k_t) + z / v|^2`.
pub fn dsm_loss(
    score: &dyn ScoreFunction,
    batch: &[StateValue],
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut total = 0.0;
    for k0 in batch {
        let d = dsm_draw(k0, sched, rng)?;
        let s = score.evaluate(&d.noised, d.sigma)?;
        d.noised.check_same_kind(&s)?;
        let inv_v = 1.0 / d.variance;
        let sq: f64 = s
            .entries()
            .iter()
            .zip(d.noise.entries())
            .map(|(s, z)| (s + z * inv_v).norm_sqr())
            .sum();
        total += d.variance * sq / s.len() as f64;
    }
    Ok(total / batch.len() as f64)
}
