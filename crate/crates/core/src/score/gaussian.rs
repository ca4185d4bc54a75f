use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

use super::ScoreFunction;
use crate::kspace::Measurement;
use crate::numerics::{ComplexImage, SeededRng};
use crate::sde::{Space, StateValue};
use crate::wavelet::{dwt, WaveletBands};
use crate::{Error, Result};

/// Independent complex Gaussian per k-space entry.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    mean: ComplexImage,
    variance: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: ComplexImage, variance: Vec<f64>) -> Result<Self> {
        if variance.len() != mean.len() {
            return Err(Error::Dimension(format!(
                "{} variances for {} entries",
                variance.len(),
                mean.len()
            )));
        }
        if let Some(v) = variance.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Parameter(format!("variance {v} is not a finite non-negative value")));
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(mean: ComplexImage, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    pub fn mean(&self) -> &ComplexImage {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn is_isotropic(&self) -> bool {
        self.variance.windows(2).all(|w| w[0] == w[1])
    }

    pub fn sample(&self, rng: &mut SeededRng) -> ComplexImage {
        let mut out = self.mean.clone();
        for (z, v) in out.data_mut().iter_mut().zip(&self.variance) {
            *z += rng.complex_normal() * v.sqrt();
        }
        out
    }

    /// Log density of the prior convolved with complex noise of variance `sigma^2`.
    pub fn log_density(&self, k: &ComplexImage, sigma: f64) -> Result<f64> {
        self.mean.check_same_shape(k)?;
        let mut acc = 0.0;
        for ((z, m), v) in k.data().iter().zip(self.mean.data()).zip(&self.variance) {
            let t = v + sigma * sigma;
            if t <= 0.0 {
                return Err(Error::Singular);
            }
            acc -= (z - m).norm_sqr() / t + (std::f64::consts::PI * t).ln();
        }
        Ok(acc)
    }

    /// Closed-form posterior mean given masked measurements with complex
    /// noise of variance `noise_stddev^2` on sampled entries.
    pub fn posterior_mean(&self, meas: &Measurement) -> Result<ComplexImage> {
        meas.mask.check_shape(&self.mean)?;
        let nv = meas.noise_stddev * meas.noise_stddev;
        let mut out = self.mean.clone();
        for (idx, z) in out.data_mut().iter_mut().enumerate() {
            if meas.mask.pattern()[idx] {
                let v = self.variance[idx];
                let y = meas.data.data()[idx];
                *z = if v + nv == 0.0 { y } else { (y * v + *z * nv) / (v + nv) };
            }
        }
        Ok(out)
    }
}

/// `-(k - mean) / (variance + sigma^2)` per entry.
pub fn gaussian_score(prior: &GaussianPrior, k: &ComplexImage, sigma: f64) -> Result<ComplexImage> {
    if !(sigma >= 0.0) {
        return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    prior.mean.check_same_shape(k)?;
    let s2 = sigma * sigma;
    let mut out = k.clone();
    for ((z, m), v) in out.data_mut().iter_mut().zip(prior.mean.data()).zip(&prior.variance) {
        let t = v + s2;
        if t == 0.0 {
            return Err(Error::Singular);
        }
        *z = -(*z - m) / t;
    }
    Ok(out)
}

impl ScoreFunction for GaussianPrior {
    fn evaluate(&self, state: &StateValue, sigma: f64) -> Result<StateValue> {
        match state {
            StateValue::Full(k) => Ok(StateValue::Full(gaussian_score(self, k, sigma)?)),
            _ => Err(Error::Unsupported("full-space prior evaluated on a subspace state".into())),
        }
    }

    fn space(&self) -> Space {
        Space::Full
    }

    fn describe(&self) -> String {
        let (h, w) = self.mean.shape();
        format!("gaussian prior {h}x{w}")
    }
}

/// The Haar stencil as a 4x4 matrix; symmetric and its own inverse.
fn haar_matrix() -> Matrix4<f64> {
    Matrix4::new(
        1.0, 1.0, 1.0, 1.0, //
        1.0, -1.0, 1.0, -1.0, //
        1.0, 1.0, -1.0, -1.0, //
        1.0, -1.0, -1.0, 1.0,
    ) * 0.5
}

/// Exact score of a diagonal [`GaussianPrior`] pushed through the wavelet
/// transform. Four-band states use the full 4x4 block covariance; LL-only
/// states use the LL marginal.
#[derive(Clone, Debug)]
pub struct SubspaceGaussian {
    mean: WaveletBands,
    /// `H diag(v_a, v_b, v_c, v_d) H` for each 2x2 block, row-major over blocks.
    block_cov: Vec<Matrix4<f64>>,
}

/// Pushforward of `full_prior` through one Haar level.
pub fn subspace_score_adapter(full_prior: &GaussianPrior) -> Result<SubspaceGaussian> {
    let mean = dwt(&full_prior.mean)?;
    let (bh, bw) = mean.band_shape();
    let (_, w) = full_prior.mean.shape();
    let h4 = haar_matrix();
    let v = &full_prior.variance;
    let mut block_cov = Vec::with_capacity(bh * bw);
    for r in 0..bh {
        for c in 0..bw {
            let i = 2 * r * w + 2 * c;
            let d = Matrix4::from_diagonal(&Vector4::new(v[i], v[i + 1], v[i + w], v[i + w + 1]));
            block_cov.push(h4 * d * h4);
        }
    }
    Ok(SubspaceGaussian { mean, block_cov })
}

impl SubspaceGaussian {
    pub fn mean(&self) -> &WaveletBands {
        &self.mean
    }

    /// LL-marginal variance of each block.
    pub fn ll_variance(&self) -> Vec<f64> {
        self.block_cov.iter().map(|c| c[(0, 0)]).collect()
    }

    fn score_bands(&self, k: &WaveletBands, sigma: f64) -> Result<WaveletBands> {
        self.mean.check_same_shape(k)?;
        let s2 = sigma * sigma;
        let mut out = k.clone();
        let n = k.ll.len();
        for idx in 0..n {
            let cov = self.block_cov[idx] + Matrix4::identity() * s2;
            let inv = cov.try_inverse().ok_or(Error::Singular)?;
            let diff: [Complex64; 4] = [
                k.ll.data()[idx] - self.mean.ll.data()[idx],
                k.lh.data()[idx] - self.mean.lh.data()[idx],
                k.hl.data()[idx] - self.mean.hl.data()[idx],
                k.hh.data()[idx] - self.mean.hh.data()[idx],
            ];
            let bands = out.bands_mut();
            for (row, band) in bands.into_iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, d) in diff.iter().enumerate() {
                    acc -= d * inv[(row, col)];
                }
                band.data_mut()[idx] = acc;
            }
        }
        Ok(out)
    }

    fn score_ll(&self, ll: &ComplexImage, sigma: f64) -> Result<ComplexImage> {
        self.mean.ll.check_same_shape(ll)?;
        let s2 = sigma * sigma;
        let mut out = ll.clone();
        for ((z, m), cov) in out.data_mut().iter_mut().zip(self.mean.ll.data()).zip(&self.block_cov) {
            let t = cov[(0, 0)] + s2;
            if t == 0.0 {
                return Err(Error::Singular);
            }
            *z = -(*z - m) / t;
        }
        Ok(out)
    }
}

impl ScoreFunction for SubspaceGaussian {
    fn evaluate(&self, state: &StateValue, sigma: f64) -> Result<StateValue> {
        if !(sigma >= 0.0) {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
        }
        match state {
            StateValue::FourBand(b) => Ok(StateValue::FourBand(self.score_bands(b, sigma)?)),
            StateValue::LowBand(ll) => Ok(StateValue::LowBand(self.score_ll(ll, sigma)?)),
            StateValue::Full(_) => {
                Err(Error::Unsupported("subspace prior evaluated on a full-space state".into()))
            }
        }
    }

    fn space(&self) -> Space {
        Space::Subspace
    }

    fn describe(&self) -> String {
        let (h, w) = self.mean.band_shape();
        format!("gaussian prior pushed to wavelet bands {h}x{w}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{forward, make_mask, MaskFamily};
    use crate::numerics::gaussian_noise;
    use crate::wavelet::idwt;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// `(d/d re + i d/d im) f / 2` by central differences, one entry at a time.
    fn fd_score(f: impl Fn(&[Complex64]) -> f64, x: &[Complex64], h: f64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(x.len());
        let mut y = x.to_vec();
        for i in 0..x.len() {
            let base = y[i];
            y[i] = base + c(h, 0.0);
            let fp = f(&y);
            y[i] = base - c(h, 0.0);
            let fm = f(&y);
            y[i] = base + c(0.0, h);
            let gp = f(&y);
            y[i] = base - c(0.0, h);
            let gm = f(&y);
            y[i] = base;
            out.push(c((fp - fm) / (2.0 * h), (gp - gm) / (2.0 * h)) * 0.5);
        }
        out
    }

    fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn score_vanishes_at_mean() {
        let mean = gaussian_noise(&mut SeededRng::new(1), 4, 4, 1.0).unwrap();
        let p = GaussianPrior::isotropic(mean.clone(), 2.0).unwrap();
        for sigma in [0.0, 0.3, 10.0] {
            assert_eq!(gaussian_score(&p, &mean, sigma).unwrap().norm_sqr(), 0.0);
        }
    }

    #[test]
    fn standard_normal_score() {
        let p = GaussianPrior::isotropic(ComplexImage::zeros(2, 2).unwrap(), 1.0).unwrap();
        let mut k = ComplexImage::zeros(2, 2).unwrap();
        k.set(1, 0, c(2.0, 0.0));
        let s = gaussian_score(&p, &k, 0.0).unwrap();
        assert_eq!(s.get(1, 0), c(-2.0, 0.0));
    }

    #[test]
    fn score_matches_log_density_gradient() {
        let p = GaussianPrior::isotropic(ComplexImage::zeros(4, 4).unwrap(), 3.0).unwrap();
        let k = gaussian_noise(&mut SeededRng::new(2), 4, 4, 2.0).unwrap();
        let s = gaussian_score(&p, &k, 1.0).unwrap();
        let fd = fd_score(
            |x| p.log_density(&ComplexImage::new(4, 4, x.to_vec()).unwrap(), 1.0).unwrap(),
            k.data(),
            1e-4,
        );
        assert!(max_rel(s.data(), &fd) < 1e-6);
    }

    #[test]
    fn singular_and_shape_errors() {
        let p = GaussianPrior::isotropic(ComplexImage::zeros(2, 2).unwrap(), 0.0).unwrap();
        let k = ComplexImage::zeros(2, 2).unwrap();
        assert!(matches!(gaussian_score(&p, &k, 0.0), Err(Error::Singular)));
        assert!(gaussian_score(&p, &ComplexImage::zeros(4, 4).unwrap(), 1.0).is_err());
        assert!(GaussianPrior::new(k.clone(), vec![-1.0; 4]).is_err());
        assert!(GaussianPrior::new(k, vec![1.0; 3]).is_err());
    }

    fn diag_prior(seed: u64) -> GaussianPrior {
        let mut rng = SeededRng::new(seed);
        let mean = gaussian_noise(&mut rng, 4, 4, 1.0).unwrap();
        let var = (0..16).map(|_| 0.5 + rng.uniform() * 2.0).collect();
        GaussianPrior::new(mean, var).unwrap()
    }

    #[test]
    fn isotropic_band_score_closed_form() {
        let mean = gaussian_noise(&mut SeededRng::new(3), 4, 4, 1.0).unwrap();
        let p = GaussianPrior::isotropic(mean.clone(), 1.0).unwrap();
        let sub = subspace_score_adapter(&p).unwrap();
        let kb = dwt(&gaussian_noise(&mut SeededRng::new(4), 4, 4, 1.0).unwrap()).unwrap();
        let sigma = 0.7;
        let got = sub.evaluate(&StateValue::FourBand(kb.clone()), sigma).unwrap();
        let wm = dwt(&mean).unwrap();
        let mut want = kb.clone();
        want.axpy(-1.0, &wm).unwrap();
        let want = want.map(|z| -z / (1.0 + sigma * sigma));
        let StateValue::FourBand(got) = got else { panic!() };
        assert!(got.max_abs_diff(&want).unwrap() < 1e-14);
        let at_mean = sub.evaluate(&StateValue::FourBand(wm), sigma).unwrap();
        assert_eq!(at_mean.norm_sqr(), 0.0);
    }

    #[test]
    fn band_score_matches_transformed_log_density() {
        let p = diag_prior(5);
        let sub = subspace_score_adapter(&p).unwrap();
        let kb = dwt(&gaussian_noise(&mut SeededRng::new(6), 4, 4, 1.5).unwrap()).unwrap();
        let sigma = 0.4;
        let state = StateValue::FourBand(kb);
        let s = sub.evaluate(&state, sigma).unwrap();
        let logp = |x: &[Complex64]| {
            let StateValue::FourBand(b) = state.with_entries(x.to_vec()).unwrap() else {
                unreachable!()
            };
            p.log_density(&idwt(&b).unwrap(), sigma).unwrap()
        };
        let fd = fd_score(logp, &state.entries(), 1e-4);
        assert!(max_rel(&s.entries(), &fd) < 1e-6);
    }

    #[test]
    fn ll_marginal_score_matches_fd() {
        let p = diag_prior(7);
        let sub = subspace_score_adapter(&p).unwrap();
        let ll = gaussian_noise(&mut SeededRng::new(8), 2, 2, 1.0).unwrap();
        let sigma = 0.9;
        let s = sub.evaluate(&StateValue::LowBand(ll.clone()), sigma).unwrap();
        let m = dwt(p.mean()).unwrap().ll;
        let v: Vec<f64> = (0..4)
            .map(|b| {
                let (r, col) = (2 * (b / 2), 2 * (b % 2));
                let pv = p.variance();
                (pv[r * 4 + col] + pv[r * 4 + col + 1] + pv[(r + 1) * 4 + col] + pv[(r + 1) * 4 + col + 1])
                    / 4.0
            })
            .collect();
        let marginal = GaussianPrior::new(m, v).unwrap();
        let fd = fd_score(
            |x| marginal.log_density(&ComplexImage::new(2, 2, x.to_vec()).unwrap(), sigma).unwrap(),
            ll.data(),
            1e-4,
        );
        assert!(max_rel(&s.entries(), &fd) < 1e-6);
    }

    #[test]
    fn full_score_then_dwt_equals_band_score() {
        let mean = gaussian_noise(&mut SeededRng::new(9), 8, 8, 1.0).unwrap();
        let p = GaussianPrior::isotropic(mean, 0.8).unwrap();
        let sub = subspace_score_adapter(&p).unwrap();
        let k = gaussian_noise(&mut SeededRng::new(10), 8, 8, 3.0).unwrap();
        for sigma in [0.01, 1.0, 30.0] {
            let full = dwt(&gaussian_score(&p, &k, sigma).unwrap()).unwrap();
            let StateValue::FourBand(b) =
                sub.evaluate(&StateValue::FourBand(dwt(&k).unwrap()), sigma).unwrap()
            else {
                panic!()
            };
            assert!(full.max_abs_diff(&b).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn posterior_mean_closed_form() {
        let mean = ComplexImage::filled(4, 4, c(1.0, 0.0)).unwrap();
        let p = GaussianPrior::isotropic(mean, 3.0).unwrap();
        let truth = ComplexImage::filled(4, 4, c(5.0, 0.0)).unwrap();
        let mask = make_mask(MaskFamily::Uniform1d, (4, 4), 2.0, 0, &mut SeededRng::new(0)).unwrap();
        let meas = forward(&truth, &mask, 0.0, &mut SeededRng::new(0)).unwrap();
        let pm = p.posterior_mean(&meas).unwrap();
        assert_eq!(pm.get(0, 0), c(5.0, 0.0));
        assert_eq!(pm.get(1, 0), c(1.0, 0.0));
        let noisy = crate::kspace::Measurement { noise_stddev: 1.0, ..meas };
        // (3 * 5 + 1 * 1) / (3 + 1)
        assert!((p.posterior_mean(&noisy).unwrap().get(0, 0) - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wrong_state_kind() {
        let p = GaussianPrior::isotropic(ComplexImage::zeros(4, 4).unwrap(), 1.0).unwrap();
        let sub = subspace_score_adapter(&p).unwrap();
        let z = ComplexImage::zeros(4, 4).unwrap();
        assert!(sub.evaluate(&StateValue::Full(z.clone()), 1.0).is_err());
        assert!(p.evaluate(&StateValue::LowBand(z), 1.0).is_err());
    }
}
