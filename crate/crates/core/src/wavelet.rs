//! One-level orthonormal Haar analysis and synthesis of k-space arrays.
//!
//! For each 2x2 block `[a b; c d]` the bands are
//!
//! ```text
//! ll = (a + b + c + d) / 2    lh = (a - b + c - d) / 2
//! hl = (a + b - c - d) / 2    hh = (a - b - c + d) / 2
//! ```
//!
//! The stencil is its own inverse, so synthesis reuses it.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::numerics::{read_array, write_array, ComplexImage, SeededRng};
use crate::{Error, Result};

pub const BAND_NAMES: [&str; 4] = ["ll", "lh", "hl", "hh"];

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletBands {
    pub ll: ComplexImage,
    pub lh: ComplexImage,
    pub hl: ComplexImage,
    pub hh: ComplexImage,
    parent_shape: (usize, usize),
}

impl WaveletBands {
    pub fn new(
        ll: ComplexImage,
        lh: ComplexImage,
        hl: ComplexImage,
        hh: ComplexImage,
    ) -> Result<Self> {
        ll.check_same_shape(&lh)?;
        ll.check_same_shape(&hl)?;
        ll.check_same_shape(&hh)?;
        let parent_shape = (ll.height() * 2, ll.width() * 2);
        Ok(Self { ll, lh, hl, hh, parent_shape })
    }

    /// Only the LL band is populated.
    pub fn from_ll(ll: ComplexImage) -> Self {
        let (h, w) = ll.shape();
        let zero = ComplexImage::zeros(h, w).expect("band dims already valid");
        Self {
            lh: zero.clone(),
            hl: zero.clone(),
            hh: zero,
            parent_shape: (h * 2, w * 2),
            ll,
        }
    }

    pub fn zeros(band_shape: (usize, usize)) -> Result<Self> {
        let z = ComplexImage::zeros(band_shape.0, band_shape.1)?;
        Self::new(z.clone(), z.clone(), z.clone(), z)
    }

    pub fn parent_shape(&self) -> (usize, usize) {
        self.parent_shape
    }

    pub fn band_shape(&self) -> (usize, usize) {
        self.ll.shape()
    }

    pub fn bands(&self) -> [&ComplexImage; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn bands_mut(&mut self) -> [&mut ComplexImage; 4] {
        [&mut self.ll, &mut self.lh, &mut self.hl, &mut self.hh]
    }

    /// Total number of complex entries across the four bands.
    pub fn len(&self) -> usize {
        4 * self.ll.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ll.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.bands().iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn check_same_shape(&self, other: &WaveletBands) -> Result<()> {
        self.ll.check_same_shape(&other.ll)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> WaveletBands {
        WaveletBands {
            ll: self.ll.map(&f),
            lh: self.lh.map(&f),
            hl: self.hl.map(&f),
            hh: self.hh.map(&f),
            parent_shape: self.parent_shape,
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &WaveletBands) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.bands_mut().into_iter().zip(other.bands()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &WaveletBands) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut m = 0.0f64;
        for (a, b) in self.bands().into_iter().zip(other.bands()) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.bands().iter().all(|b| b.is_finite())
    }

    /// Independent complex Gaussian entries in every band.
    pub fn noise(band_shape: (usize, usize), stddev: f64, rng: &mut SeededRng) -> Result<Self> {
        let (h, w) = band_shape;
        let mut band = || crate::numerics::gaussian_noise(rng, h, w, stddev);
        Self::new(band()?, band()?, band()?, band()?)
    }

    /// Writes `<stem>.ll`, `<stem>.lh`, `<stem>.hl`, `<stem>.hh`.
    pub fn write(&self, stem: impl AsRef<Path>) -> Result<[PathBuf; 4]> {
        let paths = band_paths(stem.as_ref());
        for (p, b) in paths.iter().zip(self.bands()) {
            write_array(p, b)?;
        }
        Ok(paths)
    }

    pub fn read(stem: impl AsRef<Path>) -> Result<Self> {
        let [ll, lh, hl, hh] = band_paths(stem.as_ref());
        Self::new(read_array(ll)?, read_array(lh)?, read_array(hl)?, read_array(hh)?)
    }
}

fn band_paths(stem: &Path) -> [PathBuf; 4] {
    BAND_NAMES.map(|name| {
        let mut s = stem.as_os_str().to_owned();
        s.push(".");
        s.push(name);
        PathBuf::from(s)
    })
}

#[inline]
fn haar4(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> [Complex64; 4] {
    [
        (a + b + c + d) * 0.5,
        (a - b + c - d) * 0.5,
        (a + b - c - d) * 0.5,
        (a - b - c + d) * 0.5,
    ]
}

pub fn dwt(k: &ComplexImage) -> Result<WaveletBands> {
    let (h, w) = k.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("Haar analysis needs even dims, got {h}x{w}")));
    }
    let (bh, bw) = (h / 2, w / 2);
    let mut out: [Vec<Complex64>; 4] = Default::default();
    for band in &mut out {
        band.reserve(bh * bw);
    }
    for r in 0..bh {
        for c in 0..bw {
            let q = haar4(
                k.get(2 * r, 2 * c),
                k.get(2 * r, 2 * c + 1),
                k.get(2 * r + 1, 2 * c),
                k.get(2 * r + 1, 2 * c + 1),
            );
            for (band, v) in out.iter_mut().zip(q) {
                band.push(v);
            }
        }
    }
    let [ll, lh, hl, hh] = out.map(|d| ComplexImage::new(bh, bw, d));
    WaveletBands::new(ll?, lh?, hl?, hh?)
}

pub fn idwt(b: &WaveletBands) -> Result<ComplexImage> {
    b.ll.check_same_shape(&b.lh)?;
    b.ll.check_same_shape(&b.hl)?;
    b.ll.check_same_shape(&b.hh)?;
    let (bh, bw) = b.band_shape();
    let mut out = ComplexImage::zeros(2 * bh, 2 * bw)?;
    for r in 0..bh {
        for c in 0..bw {
            let [p, q, s, t] = haar4(b.ll.get(r, c), b.lh.get(r, c), b.hl.get(r, c), b.hh.get(r, c));
            out.set(2 * r, 2 * c, p);
            out.set(2 * r, 2 * c + 1, q);
            out.set(2 * r + 1, 2 * c, s);
            out.set(2 * r + 1, 2 * c + 1, t);
        }
    }
    Ok(out)
}

/// Each band synthesized alone, in LL, LH, HL, HH order. The four images
/// are mutually orthogonal and sum to `idwt(b)`.
pub fn band_backprojections(b: &WaveletBands) -> Result<[ComplexImage; 4]> {
    let (bh, bw) = b.band_shape();
    let zero = ComplexImage::zeros(bh, bw)?;
    let mut out = Vec::with_capacity(4);
    for i in 0..4 {
        let mut bands = [zero.clone(), zero.clone(), zero.clone(), zero.clone()];
        bands[i] = b.bands()[i].clone();
        let [ll, lh, hl, hh] = bands;
        out.push(idwt(&WaveletBands::new(ll, lh, hl, hh)?)?);
    }
    Ok(out.try_into().expect("four backprojections"))
}

/// Orthogonal projection onto the span of the LL band.
pub fn project_ll(k: &ComplexImage) -> Result<ComplexImage> {
    let b = dwt(k)?;
    idwt(&WaveletBands::from_ll(b.ll))
}
