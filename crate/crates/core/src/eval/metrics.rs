//! PSNR, SSIM and MSE on magnitude images.

use crate::numerics::ComplexImage;
use crate::{Error, Result};

/// Reported PSNR when the images are identical.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

impl Metrics {
    pub fn compute(reference: &ComplexImage, test: &ComplexImage) -> Result<Self> {
        Ok(Self { psnr: psnr(reference, test)?, ssim: ssim(reference, test)?, mse: mse(reference, test)? })
    }
}

/// Mean squared difference of the magnitudes.
pub fn mse(a: &ComplexImage, b: &ComplexImage) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.norm() - y.norm()).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

fn peak(img: &ComplexImage) -> f64 {
    img.data().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `10 log10(peak^2 / mse)` with `peak = max |reference|`; equivalently the
/// MSE of both magnitude images after dividing by the reference peak.
pub fn psnr(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    let e = mse(reference, test)?;
    let p = peak(reference);
    if p == 0.0 {
        return Err(Error::Parameter("PSNR of an all-zero reference".into()));
    }
    if e == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (p * p / e).log10()).min(PSNR_CAP))
}

/// Mean SSIM over every fully contained 7x7 window, dynamic range taken
/// from the reference peak magnitude.
pub fn ssim(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    ssim_with_range(reference, test, peak(reference))
}

pub fn ssim_with_range(a: &ComplexImage, b: &ComplexImage, range: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!("{h}x{w} image is smaller than the SSIM window")));
    }
    let x = a.magnitude();
    let y = b.magnitude();
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    // box sums via summed-area tables
    let table = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut t = vec![0.0; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += f(r * w + c);
                t[(r + 1) * (w + 1) + c + 1] = t[r * (w + 1) + c + 1] + row;
            }
        }
        t
    };
    let sx = table(&|i| x[i]);
    let sy = table(&|i| y[i]);
    let sxx = table(&|i| x[i] * x[i]);
    let syy = table(&|i| y[i] * y[i]);
    let sxy = table(&|i| x[i] * y[i]);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let boxed = |t: &[f64], r: usize, c: usize| {
        let (r1, c1) = (r + SSIM_WINDOW, c + SSIM_WINDOW);
        (t[r1 * (w + 1) + c1] - t[r * (w + 1) + c1] - t[r1 * (w + 1) + c] + t[r * (w + 1) + c]) / n
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let mx = boxed(&sx, r, c);
            let my = boxed(&sy, r, c);
            let vx = (boxed(&sxx, r, c) - mx * mx).max(0.0);
            let vy = (boxed(&syy, r, c) - my * my).max(0.0);
            let cxy = boxed(&sxy, r, c) - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += if den == 0.0 { 1.0 } else { num / den };
            count += 1;
        }
    }
    Ok(total / count as f64)
}
