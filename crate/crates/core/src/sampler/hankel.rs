//! Block-Hankel low-rank refinement of a k-space array.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::numerics::ComplexImage;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HankelConfig {
    /// Patch size `(wh, ww)`.
    pub window: (usize, usize),
    pub rank: usize,
}

impl HankelConfig {
    pub fn new(window: (usize, usize), rank: usize) -> Self {
        Self { window, rank }
    }

    /// `(rows, cols)` of the Hankel matrix for an array of `shape`.
    pub fn matrix_dims(&self, shape: (usize, usize)) -> Result<(usize, usize)> {
        let (h, w) = shape;
        let (wh, ww) = self.window;
        if wh == 0 || ww == 0 || wh > h || ww > w {
            return Err(Error::Parameter(format!(
                "Hankel window {wh}x{ww} does not fit a {h}x{w} array"
            )));
        }
        Ok(((h - wh + 1) * (w - ww + 1), wh * ww))
    }

    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        let (rows, cols) = self.matrix_dims(shape)?;
        let bound = rows.min(cols);
        if self.rank == 0 || self.rank > bound {
            return Err(Error::Parameter(format!(
                "Hankel rank {} outside 1..={bound}",
                self.rank
            )));
        }
        Ok(())
    }
}

/// Row `p` is the patch at offset `(p / (w - ww + 1), p % (w - ww + 1))`,
/// vectorised row-major. Patches do not wrap.
pub fn hankel_matrix(k: &ComplexImage, window: (usize, usize)) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = HankelConfig::new(window, 1).matrix_dims(k.shape())?;
    let ww = window.1;
    let pw = k.width() - ww + 1;
    Ok(DMatrix::from_fn(rows, cols, |p, q| k.get(p / pw + q / ww, p % pw + q % ww)))
}

/// Adjoint-and-average: every entry becomes the mean of all matrix cells
/// that map to it.
pub fn hankel_average(m: &DMatrix<Complex64>, shape: (usize, usize), window: (usize, usize)) -> Result<ComplexImage> {
    let (rows, cols) = HankelConfig::new(window, 1).matrix_dims(shape)?;
    if m.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch { expected: (rows, cols), found: m.shape() });
    }
    let (h, w) = shape;
    let ww = window.1;
    let pw = w - ww + 1;
    let mut sum = vec![Complex64::new(0.0, 0.0); h * w];
    let mut count = vec![0u32; h * w];
    for p in 0..rows {
        for q in 0..cols {
            let idx = (p / pw + q / ww) * w + p % pw + q % ww;
            sum[idx] += m[(p, q)];
            count[idx] += 1;
        }
    }
    let data = sum.into_iter().zip(count).map(|(s, c)| s / c as f64).collect();
    ComplexImage::new(h, w, data)
}

/// Singular values of the Hankel matrix, largest first.
pub fn hankel_singular_values(k: &ComplexImage, window: (usize, usize)) -> Result<Vec<f64>> {
    let m = hankel_matrix(k, window)?;
    let svd = m
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonFinite("Hankel SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Truncates the Hankel matrix of `k` to its top `rank` singular triplets
/// and maps back by averaging.
pub fn hankel_lowrank(k: &ComplexImage, cfg: &HankelConfig) -> Result<ComplexImage> {
    cfg.validate(k.shape())?;
    let m = hankel_matrix(k, cfg.window)?;
    let (rows, cols) = m.shape();
    let svd = m
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonFinite("Hankel SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut low = DMatrix::<Complex64>::zeros(rows, cols);
    for &j in order.iter().take(cfg.rank) {
        let s = Complex64::new(svd.singular_values[j], 0.0);
        low += u.column(j) * s * v_t.row(j);
    }
    hankel_average(&low, k.shape(), cfg.window)
}
