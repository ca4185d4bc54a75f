//! Random ellipse phantoms with smooth phase, used as a small synthetic
//! stand-in for a brain MRI dataset.

use num_complex::Complex64;

use crate::numerics::{ComplexImage, SeededRng};
use crate::{Error, Result};

/// Smallest side length for which the ellipse model is meaningful.
pub const MIN_PHANTOM_SIDE: usize = 8;

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
    }
}

fn between(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Modified Shepp-Logan ellipses: value, x semi-axis, y semi-axis, x
/// centre, y centre, rotation in degrees.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Draws `count` image-domain phantoms of the given shape.
///
/// Each phantom is the modified Shepp-Logan head with a random global
/// scale, rotation and shift, plus independent jitter of every inner
/// ellipse's position, size and contrast. Magnitudes are clipped to
/// `[0, 1]`; the support is the outer ellipse, 35% to 60% of the field of
/// view. A random linear phase ramp with a small offset multiplies the
/// magnitude.
pub fn synth_phantoms(count: usize, shape: (usize, usize), rng: &mut SeededRng) -> Result<Vec<ComplexImage>> {
    if count == 0 {
        return Err(Error::Parameter("phantom count must be at least 1".into()));
    }
    let (h, w) = shape;
    if h < MIN_PHANTOM_SIDE || w < MIN_PHANTOM_SIDE {
        return Err(Error::Dimension(format!(
            "phantoms need at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE} pixels, got {h}x{w}"
        )));
    }
    (0..count).map(|_| one_phantom(h, w, rng)).collect()
}

fn one_phantom(h: usize, w: usize, rng: &mut SeededRng) -> Result<ComplexImage> {
    let sx = between(rng, 0.85, 1.08);
    let sy = between(rng, 0.85, 1.05);
    let rot = between(rng, -0.15, 0.15);
    let (shift_x, shift_y) = (between(rng, -0.04, 0.04), between(rng, -0.04, 0.04));
    let (sin, cos) = rot.sin_cos();

    let mut ellipses = Vec::with_capacity(SHEPP_LOGAN.len());
    for (idx, &[value, ax, ay, cx, cy, deg]) in SHEPP_LOGAN.iter().enumerate() {
        // the skull and brain outlines move together so the rim stays intact
        let (jx, jy, scale, contrast) = if idx < 2 {
            (0.0, 0.0, 1.0, 1.0)
        } else {
            (
                between(rng, -0.03, 0.03),
                between(rng, -0.03, 0.03),
                between(rng, 0.8, 1.2),
                between(rng, 0.5, 1.5),
            )
        };
        let (x, y) = ((cx + jx) * sx, (cy + jy) * sy);
        ellipses.push(Ellipse {
            cx: cos * x - sin * y + shift_x,
            cy: sin * x + cos * y + shift_y,
            ax: ax * sx * scale,
            ay: ay * sy * scale,
            angle: deg.to_radians() + rot,
            value: value * contrast,
        });
    }
    let slope_y = between(rng, -0.5, 0.5);
    let slope_x = between(rng, -0.5, 0.5);
    let offset = between(rng, -0.25, 0.25);

    ComplexImage::from_fn(h, w, |r, c| {
        // y grows upwards, as in the usual phantom definition
        let y = 1.0 - 2.0 * (r as f64 + 0.5) / h as f64;
        let x = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
        if !ellipses[0].contains(y, x) {
            return Complex64::new(0.0, 0.0);
        }
        let m: f64 = ellipses.iter().filter(|e| e.contains(y, x)).map(|e| e.value).sum();
        Complex64::from_polar(m.clamp(0.0, 1.0), offset + slope_y * y + slope_x * x)
    })
}

fn rotate90(img: &ComplexImage) -> ComplexImage {
    let n = img.height();
    ComplexImage::from_fn(n, n, |r, c| img.get(n - 1 - c, r)).expect("square shape already validated")
}

fn flip_horizontal(img: &ComplexImage) -> ComplexImage {
    let (h, w) = img.shape();
    ComplexImage::from_fn(h, w, |r, c| img.get(r, w - 1 - c)).expect("shape already validated")
}

/// Dihedral augmentation: every image in 4 rotations, each unflipped and
/// mirrored, giving 8 images per input.
pub fn augment(images: &[ComplexImage]) -> Result<Vec<ComplexImage>> {
    let mut out = Vec::with_capacity(images.len() * 8);
    for img in images {
        if img.height() != img.width() {
            return Err(Error::Unsupported(format!(
                "rotation augmentation needs square images, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        let mut cur = img.clone();
        for _ in 0..4 {
            let mirrored = flip_horizontal(&cur);
            let next = rotate90(&cur);
            out.push(cur);
            out.push(mirrored);
            cur = next;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_phantoms(1, (32, 32), &mut SeededRng::new(5)).unwrap();
        let b = synth_phantoms(1, (32, 32), &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn magnitude_and_support_bounds() {
        let mut rng = SeededRng::new(11);
        let set = synth_phantoms(100, (32, 32), &mut rng).unwrap();
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        for p in &set {
            let mags = p.magnitude();
            assert!(mags.iter().all(|&m| (0.0..=1.0 + 1e-12).contains(&m)));
            let frac = mags.iter().filter(|&&m| m > 0.0).count() as f64 / mags.len() as f64;
            assert!((0.2..=0.8).contains(&frac), "support {frac}");
            lo = lo.min(frac);
            hi = hi.max(frac);
        }
        // the generator is random, not a fixed template
        assert!(hi - lo > 0.05, "support range {lo}..{hi}");
    }

    #[test]
    fn augment_counts_and_group_closure() {
        let base = synth_phantoms(10, (16, 16), &mut SeededRng::new(1)).unwrap();
        let aug = augment(&base).unwrap();
        assert_eq!(aug.len(), 80);
        // four quarter turns return the original
        let r4 = (0..4).fold(base[0].clone(), |acc, _| rotate90(&acc));
        assert_eq!(r4, base[0]);
        assert_eq!(aug[0], base[0]);
        // all eight orientations of an asymmetric phantom are distinct
        for i in 0..8 {
            for j in 0..i {
                assert_ne!(aug[i], aug[j]);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = SeededRng::new(0);
        assert!(synth_phantoms(0, (16, 16), &mut rng).is_err());
        assert!(synth_phantoms(1, (4, 4), &mut rng).is_err());
        let rect = synth_phantoms(1, (16, 32), &mut rng).unwrap();
        assert!(augment(&rect).is_err());
    }
}
