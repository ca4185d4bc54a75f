use crate::kspace::Measurement;
use crate::numerics::{ComplexImage, SeededRng};
use crate::score::ScoreFunction;
use crate::sde::{NoiseSchedule, Space, StateValue};
use crate::{Error, Result};

fn score_checked(score: &dyn ScoreFunction, state: &StateValue, sigma: f64) -> Result<StateValue> {
    let s = score.evaluate(state, sigma)?;
    state.check_same_kind(&s)?;
    Ok(s)
}

/// Reverse VE step from level `i` to `i - 1`:
/// `k + d * s(k, sigma_i) + sqrt(d) * z` with `d = sigma_i^2 - sigma_{i-1}^2`.
/// Passing no generator drops the noise term.
pub fn predictor(
    state: &StateValue,
    score: &dyn ScoreFunction,
    sched: &NoiseSchedule,
    i: usize,
    rng: Option<&mut SeededRng>,
) -> Result<StateValue> {
    if i == 0 {
        return Err(Error::Parameter("predictor needs a step index of at least 1".into()));
    }
    let d = sched.step_variance(i)?;
    let mut next = state.clone();
    if d == 0.0 {
        return Ok(next);
    }
    let s = score_checked(score, state, sched.sigma_at(i)?)?;
    next.axpy(d, &s)?;
    if let Some(rng) = rng {
        let z = state.noise_like(d.sqrt(), rng)?;
        next.axpy(1.0, &z)?;
    }
    Ok(next)
}

pub fn predictor_full(
    k: &ComplexImage,
    score: &dyn ScoreFunction,
    sched: &NoiseSchedule,
    i: usize,
    rng: Option<&mut SeededRng>,
) -> Result<ComplexImage> {
    match predictor(&StateValue::Full(k.clone()), score, sched, i, rng)? {
        StateValue::Full(k) => Ok(k),
        _ => unreachable!("predictor preserves the state layout"),
    }
}

pub fn predictor_sub(
    state: &StateValue,
    score: &dyn ScoreFunction,
    sched: &NoiseSchedule,
    i: usize,
    rng: Option<&mut SeededRng>,
) -> Result<StateValue> {
    if state.space() != Space::Subspace {
        return Err(Error::Unsupported("subspace predictor given a full-space state".into()));
    }
    predictor(state, score, sched, i, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corrected {
    pub value: StateValue,
    /// Repetitions skipped because the score vanished.
    pub skipped: usize,
}

/// `repetitions` Langevin moves at fixed `sigma`:
/// `k + e * s + sqrt(2e) * z` with `e = 2 (r |z| / |s|)^2`.
pub fn corrector(
    state: &StateValue,
    score: &dyn ScoreFunction,
    sigma: f64,
    repetitions: usize,
    snr: f64,
    rng: &mut SeededRng,
) -> Result<Corrected> {
    if !(snr > 0.0) {
        return Err(Error::Parameter(format!("corrector snr must be positive, got {snr}")));
    }
    let mut k = state.clone();
    let mut skipped = 0;
    for _ in 0..repetitions {
        let s = score_checked(score, &k, sigma)?;
        let z = k.noise_like(1.0, rng)?;
        let s_norm = s.norm_sqr().sqrt();
        if s_norm == 0.0 {
            skipped += 1;
            continue;
        }
        let eps = 2.0 * (snr * z.norm_sqr().sqrt() / s_norm).powi(2);
        k.axpy(eps, &s)?;
        k.axpy((2.0 * eps).sqrt(), &z)?;
    }
    Ok(Corrected { value: k, skipped })
}

/// Full-space corrector at level `i`.
pub fn corrector_full(
    k: &ComplexImage,
    score: &dyn ScoreFunction,
    sched: &NoiseSchedule,
    i: usize,
    repetitions: usize,
    snr: f64,
    rng: &mut SeededRng,
) -> Result<(ComplexImage, usize)> {
    let c = corrector(&StateValue::Full(k.clone()), score, sched.sigma_at(i)?, repetitions, snr, rng)?;
    match c.value {
        StateValue::Full(k) => Ok((k, c.skipped)),
        _ => unreachable!("corrector preserves the state layout"),
    }
}

pub fn corrector_sub(
    state: &StateValue,
    score: &dyn ScoreFunction,
    sched: &NoiseSchedule,
    i: usize,
    repetitions: usize,
    snr: f64,
    rng: &mut SeededRng,
) -> Result<Corrected> {
    if state.space() != Space::Subspace {
        return Err(Error::Unsupported("subspace corrector given a full-space state".into()));
    }
    corrector(state, score, sched.sigma_at(i)?, repetitions, snr, rng)
}

/// Minimiser of `|P k - y|^2 + lambda |k - k_star|^2` per entry.
pub fn data_consistency(k_star: &ComplexImage, meas: &Measurement, lambda: f64) -> Result<ComplexImage> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("consistency weight must be >= 0, got {lambda}")));
    }
    meas.mask.check_shape(k_star)?;
    let mut out = k_star.clone();
    let w = 1.0 / (1.0 + lambda);
    for ((z, &m), y) in out.data_mut().iter_mut().zip(meas.mask.pattern()).zip(meas.data.data()) {
        if m {
            *z = if lambda == 0.0 { *y } else { (y + *z * lambda) * w };
        }
    }
    Ok(out)
}

/// Value of the consistency objective; exposed for verification.
pub fn consistency_objective(k: &ComplexImage, k_star: &ComplexImage, meas: &Measurement, lambda: f64) -> f64 {
    k.data()
        .iter()
        .zip(k_star.data())
        .zip(meas.mask.pattern().iter().zip(meas.data.data()))
        .map(|((z, s), (&m, y))| {
            let fit = if m { (z - y).norm_sqr() } else { 0.0 };
            fit + lambda * (z - s).norm_sqr()
        })
        .sum()
}
