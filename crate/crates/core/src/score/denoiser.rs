//! Plain convolutional score network with circular padding and manual
//! backpropagation.
//!
//! The network sees the state standardized by data statistics fitted at
//! training time, plus one constant channel carrying `ln(sigma)`. With
//! [`Skip::Gaussian`] the output is a residual on top of the score of the
//! fitted diagonal Gaussian, so an untrained network (zero last layer)
//! already evaluates that Gaussian score. The residual of entry `e` is scaled
//! by `v_e / (v_e + sigma^2)^(3/2)`, `v_e` the entry's data variance, so
//! it vanishes where the noise dominates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use super::{dsm_draw, ScoreFunction};
use crate::numerics::{fft2, ifft2, split_header, write_atomic, ParseError, SeededRng};
use crate::sde::{NoiseSchedule, Space, StateValue};
use crate::wavelet::dwt;
use crate::{ComplexImage, Error, Result};

pub const CHECKPOINT_MAGIC: &str = "SUBM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Full,
    FourBand,
    LowBand,
}

impl Representation {
    pub fn complex_channels(self) -> usize {
        match self {
            Self::Full | Self::LowBand => 1,
            Self::FourBand => 4,
        }
    }

    pub fn space(self) -> Space {
        match self {
            Self::Full => Space::Full,
            _ => Space::Subspace,
        }
    }

    /// Training example for this representation from a full k-space array.
    pub fn encode(self, k0: &ComplexImage) -> Result<StateValue> {
        Ok(match self {
            Self::Full => StateValue::Full(k0.clone()),
            Self::FourBand => StateValue::FourBand(dwt(k0)?),
            Self::LowBand => StateValue::LowBand(dwt(k0)?.ll),
        })
    }

    fn matches(self, state: &StateValue) -> bool {
        matches!(
            (self, state),
            (Self::Full, StateValue::Full(_))
                | (Self::FourBand, StateValue::FourBand(_))
                | (Self::LowBand, StateValue::LowBand(_))
        )
    }
}

impl FromStr for Representation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "four_band" => Ok(Self::FourBand),
            "low_band" => Ok(Self::LowBand),
            _ => Err(Error::Parameter(format!("unknown representation {s:?}"))),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::FourBand => "four_band",
            Self::LowBand => "low_band",
        })
    }
}

/// Where the convolutions run. `Image` transforms each complex channel
/// with the unitary inverse FFT before the stack and back after it, so the
/// kernels act on image-domain neighbourhoods while inputs and scores stay
/// in k-space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Kspace,
    Image,
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kspace" => Ok(Self::Kspace),
            "image" => Ok(Self::Image),
            _ => Err(Error::Parameter(format!("unknown domain {s:?}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kspace => "kspace",
            Self::Image => "image",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Skip {
    None,
    Gaussian,
}

impl FromStr for Skip {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "gaussian" => Ok(Self::Gaussian),
            _ => Err(Error::Parameter(format!("unknown skip {s:?}"))),
        }
    }
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Gaussian => "gaussian",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub representation: Representation,
    /// Spatial grid the convolutions run on (band shape for subspace models).
    pub grid: (usize, usize),
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
    pub skip: Skip,
    pub domain: Domain,
}

impl Architecture {
    /// `parent_shape` is the full k-space shape the model will serve.
    pub fn new(
        representation: Representation,
        parent_shape: (usize, usize),
        hidden: usize,
        layers: usize,
        skip: Skip,
    ) -> Result<Self> {
        ComplexImage::zeros(parent_shape.0, parent_shape.1)?;
        let grid = match representation {
            Representation::Full => parent_shape,
            _ => {
                if parent_shape.0 < 2 || parent_shape.1 < 2 {
                    return Err(Error::Dimension("subspace model needs at least 2x2".into()));
                }
                (parent_shape.0 / 2, parent_shape.1 / 2)
            }
        };
        let arch = Self { representation, grid, hidden, layers, kernel: 3, skip, domain: Domain::Kspace };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.layers < 2 || self.hidden == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "need >= 2 layers, hidden > 0 and an odd kernel; got {} layers, {} hidden, kernel {}",
                self.layers, self.hidden, self.kernel
            )));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        2 * self.representation.complex_channels() + 1
    }

    pub fn out_channels(&self) -> usize {
        2 * self.representation.complex_channels()
    }

    /// (input channels, output channels) per convolution.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let cin = if l == 0 { self.in_channels() } else { self.hidden };
                let cout = if l + 1 == self.layers { self.out_channels() } else { self.hidden };
                (cin, cout)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        let kk = self.kernel * self.kernel;
        self.layer_dims().iter().map(|(ci, co)| co * ci * kk + co).sum()
    }

    /// Complex entries per state.
    pub fn entries(&self) -> usize {
        self.representation.complex_channels() * self.grid.0 * self.grid.1
    }

    pub fn layer_descriptions(&self) -> Vec<String> {
        let n = self.layers;
        self.layer_dims()
            .iter()
            .enumerate()
            .map(|(l, (ci, co))| {
                let act = if l + 1 == n { "linear" } else { "tanh" };
                format!("conv{k}x{k} {ci}->{co} {act}", k = self.kernel)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    arch: Architecture,
    params: Vec<f64>,
    stats_mean: Vec<Complex64>,
    stats_var: Vec<f64>,
    schedule: Option<NoiseSchedule>,
}

/// Circularly padded copy of one channel.
fn pad(src: &[f64], h: usize, w: usize, p: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; ph * pw];
    for y in 0..ph {
        let sy = (y + h - p % h) % h;
        let row = &src[sy * w..(sy + 1) * w];
        for x in 0..pw {
            out[y * pw + x] = row[(x + w - p % w) % w];
        }
    }
    out
}

fn conv_forward(
    input: &[f64],
    cin: usize,
    (h, w): (usize, usize),
    weights: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
) -> Vec<f64> {
    let p = k / 2;
    let pw = w + 2 * p;
    let hw = h * w;
    let padded: Vec<Vec<f64>> = (0..cin).map(|c| pad(&input[c * hw..(c + 1) * hw], h, w, p)).collect();
    let mut out = vec![0.0; cout * hw];
    for co in 0..cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.iter_mut().for_each(|v| *v = bias[co]);
        for (ci, src) in padded.iter().enumerate() {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weights[((co * cin + ci) * k + ky) * k + kx];
                    for y in 0..h {
                        let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let d = &mut o[y * w..(y + 1) * w];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    (h, w): (usize, usize),
    weights: &[f64],
    cout: usize,
    k: usize,
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let p = k / 2;
    let pw = w + 2 * p;
    let hw = h * w;
    let padded: Vec<Vec<f64>> = (0..cin).map(|c| pad(&input[c * hw..(c + 1) * hw], h, w, p)).collect();
    for co in 0..cout {
        let g = &d_out[co * hw..(co + 1) * hw];
        d_b[co] += g.iter().sum::<f64>();
        for (ci, src) in padded.iter().enumerate() {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        acc += g[y * w..(y + 1) * w].iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    d_w[((co * cin + ci) * k + ky) * k + kx] += acc;
                }
            }
        }
    }
    if !want_input_grad {
        return None;
    }
    // d_in[ci][y][x] = sum w[co][ci][ky][kx] * d_out[co][y - ky + p][x - kx + p]
    let padded_g: Vec<Vec<f64>> = (0..cout).map(|c| pad(&d_out[c * hw..(c + 1) * hw], h, w, p)).collect();
    let mut d_in = vec![0.0; cin * hw];
    for ci in 0..cin {
        let di = &mut d_in[ci * hw..(ci + 1) * hw];
        for (co, g) in padded_g.iter().enumerate() {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weights[((co * cin + ci) * k + ky) * k + kx];
                    let (oy, ox) = (2 * p - ky, 2 * p - kx);
                    for y in 0..h {
                        let s = &g[(y + oy) * pw + ox..(y + oy) * pw + ox + w];
                        for (dv, sv) in di[y * w..(y + 1) * w].iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    }
    Some(d_in)
}

impl DenoiserModel {
    /// Random weights (scaled normal), zero biases and a zero last layer.
    /// Statistics start at mean 0, variance 1 until [`DenoiserModel::fit_stats`].
    pub fn new(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let k = arch.kernel;
        let mut params = Vec::with_capacity(arch.param_count());
        let dims = arch.layer_dims();
        for (l, &(ci, co)) in dims.iter().enumerate() {
            let last = l + 1 == dims.len();
            let std = (1.0 / (ci * k * k) as f64).sqrt();
            for _ in 0..co * ci * k * k {
                params.push(if last { 0.0 } else { std * rng.standard_normal() });
            }
            params.extend(std::iter::repeat_n(0.0, co));
        }
        let n = arch.entries();
        Ok(Self {
            arch,
            params,
            stats_mean: vec![Complex64::new(0.0, 0.0); n],
            stats_var: vec![1.0; n],
            schedule: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn schedule(&self) -> Option<&NoiseSchedule> {
        self.schedule.as_ref()
    }

    pub fn set_schedule(&mut self, sched: NoiseSchedule) {
        self.schedule = Some(sched);
    }

    pub fn stats(&self) -> (&[Complex64], &[f64]) {
        (&self.stats_mean, &self.stats_var)
    }

    /// Per-entry mean and total variance of the dataset in this model's
    /// representation.
    pub fn fit_stats(&mut self, dataset: &[StateValue]) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::Parameter("empty dataset".into()));
        }
        let n = self.arch.entries();
        let mut mean = vec![Complex64::new(0.0, 0.0); n];
        for s in dataset {
            self.check_state(s)?;
            for (m, z) in mean.iter_mut().zip(s.entries()) {
                *m += z;
            }
        }
        let inv = 1.0 / dataset.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        let mut var = vec![0.0; n];
        for s in dataset {
            for ((v, m), z) in var.iter_mut().zip(&mean).zip(s.entries()) {
                *v += (z - m).norm_sqr();
            }
        }
        var.iter_mut().for_each(|v| *v *= inv);
        self.stats_mean = mean;
        self.stats_var = var;
        Ok(())
    }

    /// Rounds parameters and statistics to f32 so a checkpoint round trip is exact.
    pub fn quantize(&mut self) {
        let q = |x: f64| x as f32 as f64;
        self.params.iter_mut().for_each(|p| *p = q(*p));
        self.stats_mean.iter_mut().for_each(|z| *z = Complex64::new(q(z.re), q(z.im)));
        self.stats_var.iter_mut().for_each(|v| *v = q(*v));
    }

    fn check_state(&self, state: &StateValue) -> Result<()> {
        if !self.arch.representation.matches(state) || state.grid() != self.arch.grid {
            return Err(Error::Unsupported(format!(
                "{} model on a {:?} grid cannot evaluate this state ({:?})",
                self.arch.representation,
                self.arch.grid,
                state.grid()
            )));
        }
        Ok(())
    }

    /// Network input channels and the per-entry factor applied to the
    /// network output to form the residual score.
    fn encode(&self, entries: &[Complex64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = self.arch.grid;
        let hw = h * w;
        let nc = self.arch.representation.complex_channels();
        let s2 = sigma * sigma;
        let mut input = vec![0.0; self.arch.in_channels() * hw];
        let mut out_scale = vec![0.0; entries.len()];
        // image-domain models share one input scale so the transform stays unitary
        let shared = 1.0 / (self.stats_var.iter().sum::<f64>() / self.stats_var.len() as f64 + s2).sqrt();
        let mut centred = vec![Complex64::new(0.0, 0.0); entries.len()];
        for (e, z) in entries.iter().enumerate() {
            let v = self.stats_var[e];
            let is = 1.0 / (v + s2).sqrt();
            let input_scale = match self.arch.domain {
                Domain::Kspace => is,
                Domain::Image => shared,
            };
            centred[e] = (z - self.stats_mean[e]) * input_scale;
            // With the Gaussian skip the residual fades out once noise swamps
            // the entry's data variance, where the skip is already close to
            // optimal; the denoised correction stays below the data scale.
            out_scale[e] = match self.arch.skip {
                Skip::Gaussian if v + s2 > 0.0 => is * v / (v + s2),
                Skip::Gaussian => 0.0,
                Skip::None => is,
            };
        }
        if self.arch.domain == Domain::Image {
            centred = self.per_channel(&centred, ifft2);
        }
        for (e, x) in centred.iter().enumerate() {
            let (c, p) = (e / hw, e % hw);
            input[2 * c * hw + p] = x.re;
            input[(2 * c + 1) * hw + p] = x.im;
        }
        let cond = sigma.ln() / 4.0;
        input[2 * nc * hw..].iter_mut().for_each(|v| *v = cond);
        (input, out_scale)
    }

    /// Applies a 2-D transform to each complex channel of a flat entry list.
    fn per_channel(
        &self,
        entries: &[Complex64],
        f: fn(&ComplexImage) -> Result<ComplexImage>,
    ) -> Vec<Complex64> {
        let (h, w) = self.arch.grid;
        entries
            .chunks_exact(h * w)
            .flat_map(|c| {
                let img = ComplexImage::new(h, w, c.to_vec()).expect("grid validated");
                f(&img).expect("grid validated").into_data()
            })
            .collect()
    }

    /// Network output as complex k-space entries.
    fn output_entries(&self, out: &[f64]) -> Vec<Complex64> {
        let hw = self.arch.grid.0 * self.arch.grid.1;
        let o: Vec<Complex64> = (0..self.arch.entries())
            .map(|e| {
                let (c, p) = (e / hw, e % hw);
                Complex64::new(out[2 * c * hw + p], out[(2 * c + 1) * hw + p])
            })
            .collect();
        match self.arch.domain {
            Domain::Kspace => o,
            Domain::Image => self.per_channel(&o, fft2),
        }
    }

    /// Activations per layer; `acts[0]` is the input, the last entry the raw output.
    fn forward_net(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let k = self.arch.kernel;
        let dims = self.arch.layer_dims();
        let mut acts = vec![input];
        let mut off = 0;
        for (l, &(ci, co)) in dims.iter().enumerate() {
            let nw = co * ci * k * k;
            let wts = &self.params[off..off + nw];
            let bias = &self.params[off + nw..off + nw + co];
            off += nw + co;
            let mut out = conv_forward(acts.last().expect("input"), ci, self.arch.grid, wts, bias, co, k);
            if l + 1 < dims.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    fn backward_net(&self, acts: &[Vec<f64>], d_out: Vec<f64>, grad: &mut [f64]) {
        let k = self.arch.kernel;
        let dims = self.arch.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for &(ci, co) in &dims {
            offsets.push(off);
            off += co * ci * k * k + co;
        }
        let mut g = d_out;
        for l in (0..dims.len()).rev() {
            let (ci, co) = dims[l];
            if l + 1 < dims.len() {
                for (gv, a) in g.iter_mut().zip(&acts[l + 1]) {
                    *gv *= 1.0 - a * a;
                }
            }
            let o = offsets[l];
            let nw = co * ci * k * k;
            let (gw, gb) = grad[o..o + nw + co].split_at_mut(nw);
            let wts = &self.params[o..o + nw];
            match conv_backward(&acts[l], ci, self.arch.grid, wts, co, k, &g, gw, gb, l > 0) {
                Some(d_in) => g = d_in,
                None => break,
            }
        }
    }

    /// Score entries plus the pieces needed for the backward pass.
    fn score_entries(&self, entries: &[Complex64], sigma: f64) -> (Vec<Complex64>, Vec<f64>, Vec<Vec<f64>>) {
        let (input, out_scale) = self.encode(entries, sigma);
        let acts = self.forward_net(input);
        let out = self.output_entries(acts.last().expect("output"));
        let s2 = sigma * sigma;
        let mut score = Vec::with_capacity(entries.len());
        for (e, z) in entries.iter().enumerate() {
            let mut s = out[e] * out_scale[e];
            if self.arch.skip == Skip::Gaussian {
                s -= (z - self.stats_mean[e]) / (self.stats_var[e] + s2);
            }
            score.push(s);
        }
        (score, out_scale, acts)
    }

    /// DSM loss (same draws as [`super::dsm_loss`]) and its parameter gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[StateValue],
        sched: &NoiseSchedule,
        rng: &mut SeededRng,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Parameter("empty batch".into()));
        }
        let hw = self.arch.grid.0 * self.arch.grid.1;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let bscale = 1.0 / batch.len() as f64;
        for k0 in batch {
            self.check_state(k0)?;
            let d = dsm_draw(k0, sched, rng)?;
            let entries = d.noised.entries();
            let noise = d.noise.entries();
            let (score, out_scale, acts) = self.score_entries(&entries, d.sigma);
            let sv = d.variance.sqrt();
            let n = entries.len() as f64;
            let mut sq = 0.0;
            let mut d_k = Vec::with_capacity(entries.len());
            for (e, (s, z)) in score.iter().zip(&noise).enumerate() {
                let a = s * sv + z / sv;
                sq += a.norm_sqr();
                d_k.push(a * (2.0 * sv * out_scale[e] * bscale / n));
            }
            // the adjoint of the unitary FFT is its inverse
            if self.arch.domain == Domain::Image {
                d_k = self.per_channel(&d_k, ifft2);
            }
            let mut d_out = vec![0.0; self.arch.out_channels() * hw];
            for (e, g) in d_k.iter().enumerate() {
                let (c, p) = (e / hw, e % hw);
                d_out[2 * c * hw + p] = g.re;
                d_out[(2 * c + 1) * hw + p] = g.im;
            }
            total += sq / n;
            self.backward_net(&acts, d_out, &mut grad);
        }
        Ok((total * bscale, grad))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_checkpoint(&std::fs::read(path.as_ref())?)
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let n_buf = 3 * self.arch.entries();
        let total = self.params.len() + n_buf;
        let mut out = format!("{CHECKPOINT_MAGIC} {total}\n").into_bytes();
        let mut push = |x: f64| out.extend_from_slice(&(x as f32).to_le_bytes());
        self.params.iter().for_each(|&p| push(p));
        self.stats_mean.iter().for_each(|z| {
            push(z.re);
            push(z.im);
        });
        self.stats_var.iter().for_each(|&v| push(v));
        let a = &self.arch;
        let mut text = format!(
            "representation={}\ngrid={}x{}\nhidden={}\nlayers={}\nkernel={}\nskip={}\ndomain={}\ntrainable={}\nbuffers={}\n",
            a.representation, a.grid.0, a.grid.1, a.hidden, a.layers, a.kernel, a.skip, a.domain,
            self.params.len(), n_buf
        );
        if let Some(s) = &self.schedule {
            text.push_str(&format!(
                "sigma_min={}\nsigma_max={}\nn_steps={}\n",
                s.sigma_min(),
                s.sigma_max(),
                s.n_steps()
            ));
        }
        for (l, d) in a.layer_descriptions().iter().enumerate() {
            text.push_str(&format!("layer{l}={d}\n"));
        }
        out.extend_from_slice(text.as_bytes());
        out
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self> {
        let (line, rest) = split_header(bytes)?;
        let count = line
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| ParseError::Header(format!("bad checkpoint header {line:?}")))?;
        let count: usize = count
            .parse()
            .map_err(|_| ParseError::Header(format!("bad parameter count {count:?}")))?;
        let nbytes = count
            .checked_mul(4)
            .ok_or_else(|| ParseError::Overflow(format!("{count} parameters")))?;
        if rest.len() < nbytes {
            return Err(ParseError::Truncated { expected: nbytes, found: rest.len() }.into());
        }
        let (payload, text) = rest.split_at(nbytes);
        let text = std::str::from_utf8(text)
            .map_err(|_| ParseError::Header("descriptor block is not UTF-8".into()))?;
        let mut kv = std::collections::HashMap::new();
        for l in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| ParseError::Header(format!("bad descriptor line {l:?}")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .copied()
                .ok_or_else(|| ParseError::Header(format!("descriptor lacks {k}")).into())
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| ParseError::Header(format!("bad {k}")).into())
        };
        let (gh, gw) = get("grid")?
            .split_once('x')
            .ok_or_else(|| ParseError::Header("bad grid".into()))?;
        let grid: (usize, usize) = (
            gh.parse().map_err(|_| ParseError::Header("bad grid".into()))?,
            gw.parse().map_err(|_| ParseError::Header("bad grid".into()))?,
        );
        let arch = Architecture {
            representation: get("representation")?.parse()?,
            grid,
            hidden: num("hidden")?,
            layers: num("layers")?,
            kernel: num("kernel")?,
            skip: get("skip")?.parse()?,
            domain: get("domain")?.parse()?,
        };
        arch.validate()?;
        let n_entries = arch.entries();
        if num("trainable")? != arch.param_count()
            || num("buffers")? != 3 * n_entries
            || count != arch.param_count() + 3 * n_entries
        {
            return Err(ParseError::Header("parameter count disagrees with architecture".into()).into());
        }
        let vals: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let np = arch.param_count();
        let params = vals[..np].to_vec();
        let stats_mean = vals[np..np + 2 * n_entries]
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        let stats_var = vals[np + 2 * n_entries..].to_vec();
        let schedule = match (kv.get("sigma_min"), kv.get("sigma_max"), kv.get("n_steps")) {
            (Some(a), Some(b), Some(n)) => {
                let bad = |_| Error::from(ParseError::Header("bad schedule".into()));
                Some(NoiseSchedule::new(
                    a.parse().map_err(bad)?,
                    b.parse().map_err(bad)?,
                    n.parse().map_err(|_| ParseError::Header("bad n_steps".into()))?,
                    0,
                )?)
            }
            _ => None,
        };
        Ok(Self { arch, params, stats_mean, stats_var, schedule })
    }
}

impl ScoreFunction for DenoiserModel {
    fn evaluate(&self, state: &StateValue, sigma: f64) -> Result<StateValue> {
        self.check_state(state)?;
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
        }
        let (score, _, _) = self.score_entries(&state.entries(), sigma);
        state.with_entries(score)
    }

    fn space(&self) -> Space {
        self.arch.representation.space()
    }

    fn describe(&self) -> String {
        format!(
            "{} {} denoiser on {}x{}: {}",
            self.arch.representation,
            self.arch.domain,
            self.arch.grid.0,
            self.arch.grid.1,
            self.arch.layer_descriptions().join(", ")
        )
    }
}
