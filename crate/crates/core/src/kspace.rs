//! Single-coil acquisition model: sampling masks, the masked forward
//! operator and zero-filled reconstructions.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::numerics::{fft2, ifft2, ComplexImage, SeededRng};
use crate::{Error, Result};

/// Realized acceleration must land within this fraction of the request.
pub const ACCELERATION_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskFamily {
    Poisson,
    Radial,
    Random2d,
    Uniform1d,
    /// Loaded from disk; generation parameters unknown.
    Custom,
}

impl FromStr for MaskFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "radial" => Ok(Self::Radial),
            "random2d" => Ok(Self::Random2d),
            "uniform1d" => Ok(Self::Uniform1d),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::Parameter(format!("unknown mask family {s:?}"))),
        }
    }
}

impl fmt::Display for MaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Poisson => "poisson",
            Self::Radial => "radial",
            Self::Random2d => "random2d",
            Self::Uniform1d => "uniform1d",
            Self::Custom => "custom",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    pattern: Vec<bool>,
    family: MaskFamily,
    acceleration: f64,
    acs_lines: usize,
}

impl SamplingMask {
    pub fn from_pattern(height: usize, width: usize, pattern: Vec<bool>) -> Result<Self> {
        ComplexImage::zeros(height, width)?;
        if pattern.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask has {} entries, expected {}",
                pattern.len(),
                height * width
            )));
        }
        let mut mask = Self {
            height,
            width,
            pattern,
            family: MaskFamily::Custom,
            acceleration: 1.0,
            acs_lines: 0,
        };
        mask.acceleration = mask.realized_acceleration();
        Ok(mask)
    }

    /// Reads a {0, 1} valued array back into a mask.
    pub fn from_image(img: &ComplexImage) -> Result<Self> {
        let pattern = img
            .data()
            .iter()
            .map(|z| {
                if *z == Complex64::new(1.0, 0.0) {
                    Ok(true)
                } else if *z == Complex64::new(0.0, 0.0) {
                    Ok(false)
                } else {
                    Err(Error::Parameter(format!("mask value {z} is not 0 or 1")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pattern(img.height(), img.width(), pattern)
    }

    pub fn to_image(&self) -> ComplexImage {
        ComplexImage::new(
            self.height,
            self.width,
            self.pattern
                .iter()
                .map(|&b| Complex64::new(if b { 1.0 } else { 0.0 }, 0.0))
                .collect(),
        )
        .expect("mask dims are validated at construction")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn family(&self) -> MaskFamily {
        self.family
    }

    /// Requested acceleration.
    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn acs_lines(&self) -> usize {
        self.acs_lines
    }

    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.pattern[row * self.width + col]
    }

    pub fn sampled_count(&self) -> usize {
        self.pattern.iter().filter(|&&b| b).count()
    }

    pub fn realized_acceleration(&self) -> f64 {
        let n = self.sampled_count();
        if n == 0 {
            f64::INFINITY
        } else {
            self.pattern.len() as f64 / n as f64
        }
    }

    /// `P k`: zeroes every unsampled entry.
    pub fn apply(&self, k: &ComplexImage) -> Result<ComplexImage> {
        self.check_shape(k)?;
        let mut out = k.clone();
        for (z, &keep) in out.data_mut().iter_mut().zip(&self.pattern) {
            if !keep {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }

    pub fn check_shape(&self, k: &ComplexImage) -> Result<()> {
        if k.shape() != self.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: k.shape() });
        }
        Ok(())
    }
}

/// Signed frequency of index `i` on an axis of length `n` (DC at 0).
fn centered(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

pub fn make_mask(
    family: MaskFamily,
    shape: (usize, usize),
    acceleration: f64,
    acs_lines: usize,
    rng: &mut SeededRng,
) -> Result<SamplingMask> {
    let (h, w) = shape;
    ComplexImage::zeros(h, w)?;
    if !(acceleration >= 1.0) || !acceleration.is_finite() {
        return Err(Error::Parameter(format!("acceleration must be >= 1, got {acceleration}")));
    }
    let acs_limit = match family {
        MaskFamily::Uniform1d => h,
        _ => h.min(w),
    };
    if acs_lines > acs_limit {
        return Err(Error::Parameter(format!(
            "ACS size {acs_lines} does not fit a {h}x{w} array"
        )));
    }
    let total = h * w;
    let mut pattern = vec![false; total];
    let is_acs = |r: usize, c: usize| -> bool {
        if acs_lines == 0 {
            return false;
        }
        let lo = (acs_lines / 2) as isize;
        let hi = (acs_lines - acs_lines / 2) as isize;
        let in_rows = (-lo..hi).contains(&centered(r, h));
        match family {
            MaskFamily::Uniform1d => in_rows,
            _ => in_rows && (-lo..hi).contains(&centered(c, w)),
        }
    };
    for r in 0..h {
        for c in 0..w {
            pattern[r * w + c] = is_acs(r, c);
        }
    }
    let target = ((total as f64 / acceleration).round() as usize).clamp(1, total);

    if acceleration == 1.0 {
        pattern.iter_mut().for_each(|b| *b = true);
    } else {
        match family {
            MaskFamily::Uniform1d => uniform_rows(&mut pattern, h, w, acceleration),
            MaskFamily::Random2d => random_fill(&mut pattern, target, rng),
            MaskFamily::Poisson => poisson_disc(&mut pattern, h, w, target, rng),
            MaskFamily::Radial => radial_spokes(&mut pattern, h, w, acceleration),
            MaskFamily::Custom => {
                return Err(Error::Parameter("custom masks cannot be generated".into()))
            }
        }
    }

    let mask = SamplingMask { height: h, width: w, pattern, family, acceleration, acs_lines };
    let realized = mask.realized_acceleration();
    if (realized - acceleration).abs() > ACCELERATION_TOLERANCE * acceleration {
        return Err(Error::Parameter(format!(
            "{family} mask realizes R = {realized:.3} for requested R = {acceleration} \
             (ACS {acs_lines}); outside the 10% tolerance"
        )));
    }
    Ok(mask)
}

/// Phase-encode rows on a regular grid; stride R for integer R.
fn uniform_rows(pattern: &mut [bool], h: usize, w: usize, acceleration: f64) {
    let n_rows = ((h as f64 / acceleration).round() as usize).clamp(1, h);
    for j in 0..n_rows {
        let r = j * h / n_rows;
        pattern[r * w..(r + 1) * w].iter_mut().for_each(|b| *b = true);
    }
}

/// Uniformly random subset topping the pattern up to `target` entries.
fn random_fill(pattern: &mut [bool], target: usize, rng: &mut SeededRng) {
    let mut free: Vec<usize> = (0..pattern.len()).filter(|&i| !pattern[i]).collect();
    let have = pattern.len() - free.len();
    let need = target.saturating_sub(have).min(free.len());
    for j in 0..need {
        let pick = j + rng.below(free.len() - j);
        free.swap(j, pick);
        pattern[free[j]] = true;
    }
}

/// Variable-density dart throwing: the exclusion radius grows linearly with
/// distance from DC and its base value is bisected until the accepted count
/// matches `target`.
fn poisson_disc(pattern: &mut [bool], h: usize, w: usize, target: usize, rng: &mut SeededRng) {
    let mut order: Vec<usize> = (0..pattern.len()).collect();
    for j in (1..order.len()).rev() {
        order.swap(j, rng.below(j + 1));
    }
    let fixed = pattern.to_vec();
    let coord = |i: usize| -> (f64, f64) {
        (centered(i / w, h) as f64, centered(i % w, w) as f64)
    };
    let density_radius = |i: usize, base: f64| -> f64 {
        let (y, x) = coord(i);
        let rho = ((y / (h as f64 / 2.0)).powi(2) + (x / (w as f64 / 2.0)).powi(2)).sqrt()
            / std::f64::consts::SQRT_2;
        base * (1.0 + 2.0 * rho)
    };
    let throw = |base: f64| -> Vec<bool> {
        let mut out = fixed.clone();
        for &i in &order {
            if out[i] {
                continue;
            }
            let r = density_radius(i, base);
            let reach = r.ceil() as isize;
            let (yi, xi) = coord(i);
            let (ri, ci) = ((i / w) as isize, (i % w) as isize);
            let mut ok = true;
            'scan: for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let rr = ri + dr;
                    let cc = ci + dc;
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if j != i && out[j] && !fixed[j] {
                        let (yj, xj) = coord(j);
                        if ((yi - yj).powi(2) + (xi - xj).powi(2)).sqrt() < r {
                            ok = false;
                            break 'scan;
                        }
                    }
                }
            }
            if ok {
                out[i] = true;
            }
        }
        out
    };
    let count = |p: &[bool]| p.iter().filter(|&&b| b).count();
    let (mut lo, mut hi) = (0.0f64, (h.max(w)) as f64);
    let mut best = throw(lo);
    let mut best_err = count(&best).abs_diff(target);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let p = throw(mid);
        let n = count(&p);
        let err = n.abs_diff(target);
        if err < best_err {
            best = p;
            best_err = err;
        }
        if n > target {
            lo = mid;
        } else if n < target {
            hi = mid;
        } else {
            break;
        }
    }
    pattern.copy_from_slice(&best);
}

/// Equiangular spokes through DC, nearest-neighbour rasterized. Spokes are
/// added until centre overlap no longer pushes the realized acceleration
/// above the request.
fn radial_spokes(pattern: &mut [bool], h: usize, w: usize, acceleration: f64) {
    let fixed = pattern.to_vec();
    let total = (h * w) as f64;
    let half = h.max(w) as f64;
    let draw = |spokes: usize| -> Vec<bool> {
        let mut p = fixed.clone();
        for s in 0..spokes {
            let theta = std::f64::consts::PI * s as f64 / spokes as f64;
            let (dy, dx) = (theta.sin(), theta.cos());
            let steps = (4.0 * half) as isize;
            for t in -steps..=steps {
                let t = t as f64 * 0.25;
                let y = (dy * t).round();
                let x = (dx * t).round();
                if y < -(h as f64) / 2.0 || y >= h as f64 / 2.0 {
                    continue;
                }
                if x < -(w as f64) / 2.0 || x >= w as f64 / 2.0 {
                    continue;
                }
                let r = (y as isize).rem_euclid(h as isize) as usize;
                let c = (x as isize).rem_euclid(w as isize) as usize;
                p[r * w + c] = true;
            }
        }
        p
    };
    let realized = |p: &[bool]| total / p.iter().filter(|&&b| b).count().max(1) as f64;
    // Coverage grows with the spoke count only roughly (every angle moves
    // when a spoke is added): bisect for the first count reaching the
    // target, then take the closest match among its neighbours.
    let (mut lo, mut hi) = (1usize, 4 * h.max(w));
    while lo < hi {
        let mid = (lo + hi) / 2;
        if realized(&draw(mid)) <= acceleration {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    for spokes in lo.saturating_sub(3).max(1)..=lo + 3 {
        let p = draw(spokes);
        let err = (realized(&p) / acceleration - 1.0).abs();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, p));
        }
    }
    pattern.copy_from_slice(&best.expect("at least one spoke count tried").1);
}

/// Under-sampled k-space `f = P(k + eta)`.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub data: ComplexImage,
    pub mask: SamplingMask,
    pub noise_stddev: f64,
}

impl Measurement {
    /// Wraps already-masked data, checking the zero-outside-mask invariant.
    pub fn new(data: ComplexImage, mask: SamplingMask, noise_stddev: f64) -> Result<Self> {
        mask.check_shape(&data)?;
        if data
            .data()
            .iter()
            .zip(mask.pattern())
            .any(|(z, &m)| !m && *z != Complex64::new(0.0, 0.0))
        {
            return Err(Error::Parameter("measurement is nonzero off the mask".into()));
        }
        Ok(Self { data, mask, noise_stddev })
    }
}

pub fn forward(
    k: &ComplexImage,
    mask: &SamplingMask,
    noise_stddev: f64,
    rng: &mut SeededRng,
) -> Result<Measurement> {
    mask.check_shape(k)?;
    if !(noise_stddev >= 0.0) {
        return Err(Error::Parameter(format!("noise stddev must be >= 0, got {noise_stddev}")));
    }
    let mut data = k.clone();
    for (z, &m) in data.data_mut().iter_mut().zip(mask.pattern()) {
        if m {
            if noise_stddev > 0.0 {
                *z += rng.complex_normal() * noise_stddev;
            }
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    Ok(Measurement { data, mask: mask.clone(), noise_stddev })
}

pub fn image_to_kspace(x: &ComplexImage) -> Result<ComplexImage> {
    fft2(x)
}

pub fn kspace_to_image(k: &ComplexImage) -> Result<ComplexImage> {
    ifft2(k)
}

pub fn zero_filled(meas: &Measurement) -> Result<ComplexImage> {
    meas.mask.check_shape(&meas.data)?;
    kspace_to_image(&meas.data)
}
