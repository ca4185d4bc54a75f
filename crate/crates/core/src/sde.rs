//! Variance-exploding noise schedule, forward perturbation and the forward
//! trajectory with a single projection onto the wavelet subspace.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::numerics::{gaussian_noise, ComplexImage, SeededRng};
use crate::wavelet::{dwt, idwt, WaveletBands};
use crate::{Error, Result};

pub const DEFAULT_SIGMA_MIN: f64 = 0.01;
pub const DEFAULT_SIGMA_MAX: f64 = 378.0;
pub const DEFAULT_STEPS: usize = 1000;

/// Geometric ladder `sigma_i = sigma_min * (sigma_max / sigma_min)^(i / (N - 1))`.
///
/// Index `m_split` marks the step where the forward process moves into the
/// subspace (and where the reverse process hands back to full space).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
    n_steps: usize,
    m_split: usize,
}

impl NoiseSchedule {
    /// `sigma_max == sigma_min` is accepted and gives a flat ladder.
    pub fn new(sigma_min: f64, sigma_max: f64, n_steps: usize, m_split: usize) -> Result<Self> {
        if !(sigma_min > 0.0) || !sigma_max.is_finite() || sigma_max < sigma_min {
            return Err(Error::Parameter(format!(
                "need 0 < sigma_min <= sigma_max, got {sigma_min}, {sigma_max}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::Parameter(format!("need at least 2 steps, got {n_steps}")));
        }
        if m_split > n_steps {
            return Err(Error::Parameter(format!("m_split {m_split} exceeds N = {n_steps}")));
        }
        Ok(Self { sigma_min, sigma_max, n_steps, m_split })
    }

    pub fn with_split(mut self, m_split: usize) -> Result<Self> {
        if m_split > self.n_steps {
            return Err(Error::Parameter(format!("m_split {m_split} exceeds N = {}", self.n_steps)));
        }
        self.m_split = m_split;
        Ok(self)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn m_split(&self) -> usize {
        self.m_split
    }

    pub fn sigma_at(&self, i: usize) -> Result<f64> {
        if i >= self.n_steps {
            return Err(Error::IndexOutOfRange { index: i, len: self.n_steps });
        }
        if i == 0 {
            return Ok(self.sigma_min);
        }
        if i == self.n_steps - 1 {
            return Ok(self.sigma_max);
        }
        let frac = i as f64 / (self.n_steps - 1) as f64;
        Ok(self.sigma_min * (self.sigma_max / self.sigma_min).powf(frac))
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.sigma_at(i).expect("in range")).collect()
    }

    /// Variance of the forward kernel at step `i`: `sigma_i^2 - sigma_0^2`.
    pub fn kernel_variance(&self, i: usize) -> Result<f64> {
        let s = self.sigma_at(i)?;
        Ok(s * s - self.sigma_min * self.sigma_min)
    }

    /// Variance added between steps `i - 1` and `i`.
    pub fn step_variance(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Err(Error::IndexOutOfRange { index: 0, len: self.n_steps });
        }
        let hi = self.sigma_at(i)?;
        let lo = self.sigma_at(i - 1)?;
        Ok((hi * hi - lo * lo).max(0.0))
    }

    /// Smallest index with `sigma_i^2 >= 25 * max|k0|^2`, i.e. where noise
    /// swamps every entry of the clean data. Falls back to `N`.
    pub fn snr_split(&self, k0: &ComplexImage) -> usize {
        let peak = k0.data().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        (0..self.n_steps)
            .find(|&i| {
                let s = self.sigma_at(i).expect("in range");
                s * s >= 25.0 * peak
            })
            .unwrap_or(self.n_steps)
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::new(DEFAULT_SIGMA_MIN, DEFAULT_SIGMA_MAX, DEFAULT_STEPS, DEFAULT_STEPS)
            .expect("valid defaults")
    }
}

/// Which representation the diffusion runs in after the split index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubspaceMode {
    /// Never leaves full k-space.
    Full,
    /// Keeps only the LL band: a genuine d -> d/4 reduction.
    LlProjection,
    /// Keeps all four bands: an orthonormal re-parameterization.
    FourBand,
}

impl FromStr for SubspaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "ll_projection" => Ok(Self::LlProjection),
            "four_band" => Ok(Self::FourBand),
            _ => Err(Error::Parameter(format!("unknown subspace mode {s:?}"))),
        }
    }
}

impl fmt::Display for SubspaceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::LlProjection => "ll_projection",
            Self::FourBand => "four_band",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Full,
    Subspace,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateValue {
    Full(ComplexImage),
    FourBand(WaveletBands),
    /// LL band only, at half resolution.
    LowBand(ComplexImage),
}

impl StateValue {
    pub fn space(&self) -> Space {
        match self {
            Self::Full(_) => Space::Full,
            _ => Space::Subspace,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        match self {
            Self::Full(k) | Self::LowBand(k) => k.norm_sqr(),
            Self::FourBand(b) => b.norm_sqr(),
        }
    }

    /// Back to full k-space; missing bands are zero.
    pub fn to_full(&self) -> Result<ComplexImage> {
        match self {
            Self::Full(k) => Ok(k.clone()),
            Self::FourBand(b) => idwt(b),
            Self::LowBand(ll) => idwt(&WaveletBands::from_ll(ll.clone())),
        }
    }

    /// Number of complex entries carried by the state.
    pub fn len(&self) -> usize {
        match self {
            Self::Full(k) | Self::LowBand(k) => k.len(),
            Self::FourBand(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial grid of the state (band shape for subspace states).
    pub fn grid(&self) -> (usize, usize) {
        match self {
            Self::Full(k) | Self::LowBand(k) => k.shape(),
            Self::FourBand(b) => b.band_shape(),
        }
    }

    pub fn same_kind(&self, other: &StateValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other) && self.grid() == other.grid()
    }

    pub fn check_same_kind(&self, other: &StateValue) -> Result<()> {
        if !self.same_kind(other) {
            return Err(Error::ShapeMismatch { expected: self.grid(), found: other.grid() });
        }
        Ok(())
    }

    /// Entries in a fixed order (bands LL, LH, HL, HH for four-band states).
    pub fn entries(&self) -> Vec<Complex64> {
        match self {
            Self::Full(k) | Self::LowBand(k) => k.data().to_vec(),
            Self::FourBand(b) => b.bands().iter().flat_map(|x| x.data().iter().copied()).collect(),
        }
    }

    /// Same layout as `self`, filled from `entries` in [`StateValue::entries`] order.
    pub fn with_entries(&self, entries: Vec<Complex64>) -> Result<StateValue> {
        if entries.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} entries for a state of {}",
                entries.len(),
                self.len()
            )));
        }
        let (h, w) = self.grid();
        Ok(match self {
            Self::Full(_) => Self::Full(ComplexImage::new(h, w, entries)?),
            Self::LowBand(_) => Self::LowBand(ComplexImage::new(h, w, entries)?),
            Self::FourBand(_) => {
                let n = h * w;
                let mut it = entries.chunks_exact(n).map(|c| ComplexImage::new(h, w, c.to_vec()));
                let mut next = || it.next().expect("four chunks");
                Self::FourBand(WaveletBands::new(next()?, next()?, next()?, next()?)?)
            }
        })
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> StateValue {
        match self {
            Self::Full(k) => Self::Full(k.map(f)),
            Self::LowBand(k) => Self::LowBand(k.map(f)),
            Self::FourBand(b) => Self::FourBand(b.map(f)),
        }
    }

    pub fn scale(&self, s: f64) -> StateValue {
        self.map(|z| z * s)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &StateValue) -> Result<()> {
        match (self, other) {
            (Self::Full(a), Self::Full(b)) | (Self::LowBand(a), Self::LowBand(b)) => a.axpy(alpha, b),
            (Self::FourBand(a), Self::FourBand(b)) => a.axpy(alpha, b),
            (a, b) => Err(Error::ShapeMismatch { expected: a.grid(), found: b.grid() }),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Self::Full(k) | Self::LowBand(k) => k.is_finite(),
            Self::FourBand(b) => b.is_finite(),
        }
    }

    /// Complex Gaussian state of the same layout.
    pub fn noise_like(&self, stddev: f64, rng: &mut SeededRng) -> Result<StateValue> {
        let (h, w) = self.grid();
        Ok(match self {
            Self::Full(_) => Self::Full(gaussian_noise(rng, h, w, stddev)?),
            Self::LowBand(_) => Self::LowBand(gaussian_noise(rng, h, w, stddev)?),
            Self::FourBand(_) => Self::FourBand(WaveletBands::noise((h, w), stddev, rng)?),
        })
    }

    fn add_noise(&mut self, stddev: f64, rng: &mut SeededRng) -> Result<()> {
        let z = self.noise_like(stddev, rng)?;
        self.axpy(1.0, &z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState {
    pub value: StateValue,
    pub step_index: usize,
}

impl DiffusionState {
    pub fn space(&self) -> Space {
        self.value.space()
    }
}

/// Samples the VE kernel: `k0 + z` with per-entry variance `sigma_i^2 - sigma_0^2`.
pub fn perturb(
    k0: &ComplexImage,
    sched: &NoiseSchedule,
    i: usize,
    rng: &mut SeededRng,
) -> Result<ComplexImage> {
    let std = sched.kernel_variance(i)?.sqrt();
    let z = gaussian_noise(rng, k0.height(), k0.width(), std)?;
    k0.add(&z)
}

fn project(k: &ComplexImage, mode: SubspaceMode) -> Result<StateValue> {
    Ok(match mode {
        SubspaceMode::Full => StateValue::Full(k.clone()),
        SubspaceMode::FourBand => StateValue::FourBand(dwt(k)?),
        SubspaceMode::LlProjection => StateValue::LowBand(dwt(k)?.ll),
    })
}

/// Forward diffusion over all `N` steps.
///
/// Step 0 is `perturb(k0, 0)`; step `i` adds variance
/// `sigma_i^2 - sigma_{i-1}^2` in the active space. At step `m_split` the
/// freshly noised state is projected (never, in [`SubspaceMode::Full`]).
pub fn forward_trajectory(
    k0: &ComplexImage,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
    mode: SubspaceMode,
) -> Result<Vec<DiffusionState>> {
    let mut out = Vec::with_capacity(sched.n_steps());
    let mut value = StateValue::Full(perturb(k0, sched, 0, rng)?);
    for i in 0..sched.n_steps() {
        if i > 0 {
            value.add_noise(sched.step_variance(i)?.sqrt(), rng)?;
        }
        if i == sched.m_split() {
            if let StateValue::Full(k) = &value {
                value = project(k, mode)?;
            }
        }
        out.push(DiffusionState { value: value.clone(), step_index: i });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::project_ll;

    #[test]
    fn ladder_endpoints_from_defaults() {
        let s = NoiseSchedule::default();
        assert_eq!(s.sigma_at(0).unwrap(), 0.01);
        assert_eq!(s.sigma_at(999).unwrap(), 378.0);
        assert!(matches!(s.sigma_at(1000), Err(Error::IndexOutOfRange { .. })));
        let sig = s.sigmas();
        assert!(sig.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn geometric_midpoint() {
        let s = NoiseSchedule::new(0.01, 378.0, 3, 3).unwrap();
        // sqrt(0.01 * 378) = sqrt(3.78)
        assert!((s.sigma_at(1).unwrap() - 1.944_222_209_522_358).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(NoiseSchedule::new(0.0, 1.0, 10, 0).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0, 10, 0).is_err());
        assert!(NoiseSchedule::new(0.1, 1.0, 1, 0).is_err());
        assert!(NoiseSchedule::new(0.1, 1.0, 10, 11).is_err());
    }

    #[test]
    fn perturb_at_zero_is_identity() {
        let k = ComplexImage::filled(4, 4, Complex64::new(1.0, 2.0)).unwrap();
        let s = NoiseSchedule::default();
        assert_eq!(perturb(&k, &s, 0, &mut SeededRng::new(1)).unwrap(), k);
    }

    #[test]
    fn full_mode_matches_two_perturbs() {
        let k = ComplexImage::filled(4, 4, Complex64::new(1.0, 0.0)).unwrap();
        let s = NoiseSchedule::new(0.1, 5.0, 2, 2).unwrap();
        let traj = forward_trajectory(&k, &s, &mut SeededRng::new(3), SubspaceMode::Full).unwrap();
        let mut rng = SeededRng::new(3);
        let a = perturb(&k, &s, 0, &mut rng).unwrap();
        let b = perturb(&k, &s, 1, &mut rng).unwrap();
        assert_eq!(traj[0].value, StateValue::Full(a));
        assert_eq!(traj[1].value, StateValue::Full(b));
    }

    #[test]
    fn flat_ll_trajectory_repeats_projection() {
        let k = gaussian_noise(&mut SeededRng::new(2), 8, 8, 1.0).unwrap();
        let s = NoiseSchedule::new(0.5, 0.5, 5, 0).unwrap();
        let traj =
            forward_trajectory(&k, &s, &mut SeededRng::new(4), SubspaceMode::LlProjection).unwrap();
        let p = project_ll(&k).unwrap();
        for st in &traj {
            assert_eq!(st.space(), Space::Subspace);
            assert!(st.value.to_full().unwrap().max_abs_diff(&p).unwrap() < 1e-12);
        }
    }

    #[test]
    fn four_band_split_conserves_energy() {
        let k = gaussian_noise(&mut SeededRng::new(2), 8, 8, 1.0).unwrap();
        let s = NoiseSchedule::new(0.01, 10.0, 10, 4).unwrap();
        let full = forward_trajectory(&k, &s, &mut SeededRng::new(9), SubspaceMode::Full).unwrap();
        let sub = forward_trajectory(&k, &s, &mut SeededRng::new(9), SubspaceMode::FourBand).unwrap();
        for st in &sub {
            assert_eq!(st.space() == Space::Subspace, st.step_index >= 4);
        }
        let e_full = full[4].value.norm_sqr();
        let e_sub = sub[4].value.norm_sqr();
        assert!((e_full - e_sub).abs() <= 1e-10 * e_full.max(1.0));
        assert_eq!(sub[3].value, full[3].value);
    }

    #[test]
    fn snr_split_picks_first_dominant_sigma() {
        let k = ComplexImage::filled(2, 2, Complex64::new(3.0, 4.0)).unwrap();
        let s = NoiseSchedule::default();
        let m = s.snr_split(&k);
        let sig = s.sigmas();
        assert!(sig[m] * sig[m] >= 25.0 * 25.0);
        assert!(sig[m - 1] * sig[m - 1] < 25.0 * 25.0);
    }
}
