//! Dense complex arrays, the unitary 2D FFT, seeded Gaussian noise and the
//! SUBK1 on-disk array format.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Row-major complex 2D array with power-of-two sides.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "{height}x{width} is not a power-of-two shape"
        )));
    }
    Ok(())
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} array",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, Complex64::new(0.0, 0.0))
    }

    pub fn filled(height: usize, width: usize, value: Complex64) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self { height, width, data: vec![value; height * width] })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.width + col] = value;
    }

    /// Errors unless `other` has the same shape.
    pub fn check_same_shape(&self, other: &ComplexImage) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Complex inner product `sum(conj(self) * other)`.
    pub fn inner(&self, other: &ComplexImage) -> Result<Complex64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &ComplexImage) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn distance(&self, other: &ComplexImage) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &ComplexImage,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexImage> {
        self.check_same_shape(other)?;
        Ok(ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &ComplexImage) -> Result<ComplexImage> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexImage) -> Result<ComplexImage> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> ComplexImage {
        self.map(|z| z * s)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ComplexImage) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    /// Circularly shifts by half the size in both axes (DC to the centre).
    pub fn fftshift(&self) -> ComplexImage {
        let (h, w) = self.shape();
        let mut out = self.clone();
        for r in 0..h {
            for c in 0..w {
                out.data[((r + h / 2) % h) * w + (c + w / 2) % w] = self.data[r * w + c];
            }
        }
        out
    }
}

/// In-place iterative radix-2 FFT. `inverse` flips the twiddle sign; no scaling.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // exact twiddles per stage, recomputing from the angle avoids drift
        let twiddles: Vec<Complex64> =
            (0..half).map(|k| Complex64::from_polar(1.0, ang * k as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn fft2_impl(img: &ComplexImage, inverse: bool) -> Result<ComplexImage> {
    check_dims(img.height, img.width)?;
    let (h, w) = img.shape();
    let mut out = img.clone();
    for row in out.data.chunks_mut(w) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for (r, z) in col.iter_mut().enumerate() {
            *z = out.data[r * w + c];
        }
        fft_in_place(&mut col, inverse);
        for (r, z) in col.iter().enumerate() {
            out.data[r * w + c] = *z;
        }
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for z in &mut out.data {
        *z *= scale;
    }
    Ok(out)
}

/// Unitary 2D DFT with DC at index (0, 0).
pub fn fft2(img: &ComplexImage) -> Result<ComplexImage> {
    fft2_impl(img, false)
}

/// Inverse of [`fft2`].
pub fn ifft2(img: &ComplexImage) -> Result<ComplexImage> {
    fft2_impl(img, true)
}

/// Deterministic random stream. Cloning duplicates the stream; use
/// [`SeededRng::fork`] for independent parallel streams.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Independent stream derived from this one's seed and a label.
    pub fn fork(&self, label: u64) -> SeededRng {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03);
        SeededRng::new(mixed)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Complex normal with unit total variance.
    pub fn complex_normal(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex64::new(re * s, im * s)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

impl rand::RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Complex Gaussian array; real and imaginary parts each have variance
/// `stddev^2 / 2`.
pub fn gaussian_noise(
    rng: &mut SeededRng,
    height: usize,
    width: usize,
    stddev: f64,
) -> Result<ComplexImage> {
    if !(stddev >= 0.0) || !stddev.is_finite() {
        return Err(Error::Parameter(format!("noise stddev must be >= 0, got {stddev}")));
    }
    ComplexImage::from_fn(height, width, |_, _| rng.complex_normal() * stddev)
}

/// Parse failures for SUBK1/SUBM1 files.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("declared dimensions overflow: {0}")]
    Overflow(String),
}

pub(crate) const ARRAY_MAGIC: &str = "SUBK1";

/// Splits `bytes` at the first newline and returns (header line, rest).
pub(crate) fn split_header(bytes: &[u8]) -> std::result::Result<(&str, &[u8]), ParseError> {
    let nl = bytes
        .iter()
        .take(128)
        .position(|&b| b == b'\n')
        .ok_or_else(|| ParseError::Header("missing header line".into()))?;
    let line = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| ParseError::Header("header is not ASCII".into()))?;
    Ok((line, &bytes[nl + 1..]))
}

pub fn decode_array(bytes: &[u8]) -> Result<ComplexImage> {
    let (line, payload) = split_header(bytes)?;
    let mut parts = line.split(' ');
    if parts.next() != Some(ARRAY_MAGIC) {
        return Err(ParseError::Header(format!("bad magic in {line:?}")).into());
    }
    let mut dim = |name: &str| -> std::result::Result<usize, ParseError> {
        let tok = parts
            .next()
            .ok_or_else(|| ParseError::Header(format!("missing {name}")))?;
        if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::Header(format!("bad {name} {tok:?}")));
        }
        tok.parse::<usize>()
            .map_err(|_| ParseError::Overflow(format!("{name} {tok}")))
    };
    let height = dim("height")?;
    let width = dim("width")?;
    if parts.next().is_some() {
        return Err(ParseError::Header(format!("extra fields in {line:?}")).into());
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| ParseError::Overflow(format!("{height}x{width}")))?;
    if payload.len() < expected {
        return Err(ParseError::Truncated { expected, found: payload.len() }.into());
    }
    if payload.len() > expected {
        return Err(ParseError::TrailingBytes(payload.len() - expected).into());
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    ComplexImage::new(height, width, data)
}

pub fn encode_array(img: &ComplexImage) -> Vec<u8> {
    let header = format!("{ARRAY_MAGIC} {} {}\n", img.height, img.width);
    let mut out = Vec::with_capacity(header.len() + img.len() * 8);
    out.extend_from_slice(header.as_bytes());
    for z in &img.data {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn read_array(path: impl AsRef<Path>) -> Result<ComplexImage> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    decode_array(&bytes)
}

/// Values are stored as f32; anything already representable in f32
/// survives a round trip bit for bit.
pub fn write_array(path: impl AsRef<Path>, img: &ComplexImage) -> Result<()> {
    write_atomic(path.as_ref(), &encode_array(img))
}

/// Writes to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(bytes)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
