//! Forward and backward kernels for the decoder's operations.
//!
//! These are plain functions over [`Tensor`]s; the tape in
//! [`super::graph`] strings them together. They are public so inference
//! paths can run without recording a graph.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Normalization epsilon.
pub const NORM_EPS: f64 = 1e-5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[c] += Σ_j w(c, j) · src[j]` over planes of `plane` values, four
/// output planes per pass over each input plane.
fn mix_planes(out: &mut [f64], src: &[f64], plane: usize, k_in: usize, w: impl Fn(usize, usize) -> f64) {
    for (block, chunk) in out.chunks_mut(4 * plane).enumerate() {
        let c0 = 4 * block;
        let rows = chunk.len() / plane;
        for (j, x) in src.chunks(plane).take(k_in).enumerate() {
            if rows == 4 {
                let ws = [w(c0, j), w(c0 + 1, j), w(c0 + 2, j), w(c0 + 3, j)];
                if ws.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let (d0, rest) = chunk.split_at_mut(plane);
                let (d1, rest) = rest.split_at_mut(plane);
                let (d2, d3) = rest.split_at_mut(plane);
                for i in 0..plane {
                    let v = x[i];
                    d0[i] += ws[0] * v;
                    d1[i] += ws[1] * v;
                    d2[i] += ws[2] * v;
                    d3[i] += ws[3] * v;
                }
            } else {
                for (r, dst) in chunk.chunks_mut(plane).enumerate() {
                    let a = w(c0 + r, j);
                    if a != 0.0 {
                        for (o, v) in dst.iter_mut().zip(x) {
                            *o += a * v;
                        }
                    }
                }
            }
        }
    }
}

/// `out[c * nb + j] = a[c] · b[j]` for planes of `plane` values, in 4×4 tiles.
fn plane_dots(a: &[f64], b: &[f64], plane: usize, out: &mut [f64]) {
    let na = a.len() / plane;
    let nb = b.len() / plane;
    for c0 in (0..na).step_by(4) {
        for j0 in (0..nb).step_by(4) {
            if c0 + 4 <= na && j0 + 4 <= nb {
                let pa: [&[f64]; 4] = std::array::from_fn(|r| &a[(c0 + r) * plane..(c0 + r + 1) * plane]);
                let pb: [&[f64]; 4] = std::array::from_fn(|r| &b[(j0 + r) * plane..(j0 + r + 1) * plane]);
                let mut acc = [[0.0; 4]; 4];
                for i in 0..plane {
                    let va = [pa[0][i], pa[1][i], pa[2][i], pa[3][i]];
                    let vb = [pb[0][i], pb[1][i], pb[2][i], pb[3][i]];
                    for r in 0..4 {
                        for s in 0..4 {
                            acc[r][s] += va[r] * vb[s];
                        }
                    }
                }
                for r in 0..4 {
                    for s in 0..4 {
                        out[(c0 + r) * nb + j0 + s] = acc[r][s];
                    }
                }
            } else {
                for c in c0..(c0 + 4).min(na) {
                    for j in j0..(j0 + 4).min(nb) {
                        out[c * nb + j] = dot(&a[c * plane..(c + 1) * plane], &b[j * plane..(j + 1) * plane]);
                    }
                }
            }
        }
    }
}

fn check_matrix(x: &Tensor, weights: &Tensor) -> Result<()> {
    if weights.height() != 1 || weights.width() != x.channels() {
        return Err(Error::InvalidShape(format!(
            "mixing matrix is {}x{} but input has {} channels",
            weights.channels(),
            weights.width(),
            x.channels()
        )));
    }
    Ok(())
}

/// `out[c] = Σ_j weights[c, j] · x[j]` for every pixel (a 1×1 convolution
/// without bias). `weights` is a `k_out × k_in` matrix.
pub fn linear_channel_combination(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    check_matrix(x, weights)?;
    let k_in = x.channels();
    let k_out = weights.channels();
    let mut out = Tensor::zeros(k_out, x.height(), x.width());
    let w = weights.data();
    mix_planes(out.data_mut(), x.data(), x.height() * x.width(), k_in, |c, j| {
        w[c * k_in + j]
    });
    Ok(out)
}

/// Returns `(d_x, d_weights)`; `d_x` is skipped when not requested.
pub fn linear_channel_combination_backward(
    x: &Tensor,
    weights: &Tensor,
    d_out: &Tensor,
    want_dx: bool,
) -> (Option<Tensor>, Tensor) {
    let k_in = x.channels();
    let k_out = weights.channels();
    let plane = x.height() * x.width();
    let mut d_w = Tensor::zeros(k_out, 1, k_in);
    plane_dots(d_out.data(), x.data(), plane, d_w.data_mut());
    let d_x = want_dx.then(|| {
        let mut d_x = Tensor::zeros(k_in, x.height(), x.width());
        let w = weights.data();
        mix_planes(d_x.data_mut(), d_out.data(), plane, k_out, |j, c| w[c * k_in + j]);
        d_x
    });
    (d_x, d_w)
}

/// Align-corners sampling positions for one axis: output index `i` reads
/// `(1 - frac[i]) · src[lo[i]] + frac[i] · src[hi[i]]`.
#[derive(Debug, Clone)]
pub struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisTaps {
    pub fn new(src: usize, dst: usize) -> Self {
        let mut taps = AxisTaps {
            lo: Vec::with_capacity(dst),
            hi: Vec::with_capacity(dst),
            frac: Vec::with_capacity(dst),
        };
        for i in 0..dst {
            let pos = if src <= 1 || dst <= 1 {
                0.0
            } else {
                i as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            taps.lo.push(lo);
            taps.hi.push(hi);
            taps.frac.push(pos - lo as f64);
        }
        taps
    }
}

/// Precomputed taps for one upsampling.
#[derive(Debug, Clone)]
pub struct UpsamplePlan {
    rows: AxisTaps,
    cols: AxisTaps,
    out_h: usize,
    out_w: usize,
}

impl UpsamplePlan {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h < in_h || out_w < in_w || in_h == 0 || in_w == 0 {
            return Err(Error::InvalidShape(format!(
                "cannot upsample {in_h}x{in_w} to {out_h}x{out_w}"
            )));
        }
        Ok(UpsamplePlan {
            rows: AxisTaps::new(in_h, out_h),
            cols: AxisTaps::new(in_w, out_w),
            out_h,
            out_w,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (k, _, in_w) = x.shape();
        let mut out = Tensor::zeros(k, self.out_h, self.out_w);
        for c in 0..k {
            let src = x.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..self.out_h {
                let (r0, r1, fy) = (self.rows.lo[y], self.rows.hi[y], self.rows.frac[y]);
                let top = &src[r0 * in_w..(r0 + 1) * in_w];
                let bot = &src[r1 * in_w..(r1 + 1) * in_w];
                let row = &mut dst[y * self.out_w..(y + 1) * self.out_w];
                for (xo, v) in row.iter_mut().enumerate() {
                    let (c0, c1, fx) = (self.cols.lo[xo], self.cols.hi[xo], self.cols.frac[xo]);
                    let t = top[c0] + fx * (top[c1] - top[c0]);
                    let b = bot[c0] + fx * (bot[c1] - bot[c0]);
                    *v = t + fy * (b - t);
                }
            }
        }
        out
    }

    /// Scatters `d_out` back with the forward interpolation weights.
    pub fn backward(&self, in_h: usize, in_w: usize, d_out: &Tensor) -> Tensor {
        let k = d_out.channels();
        let mut d_x = Tensor::zeros(k, in_h, in_w);
        for c in 0..k {
            let g = d_out.channel(c);
            let dst = d_x.channel_mut(c);
            for y in 0..self.out_h {
                let (r0, r1, fy) = (self.rows.lo[y], self.rows.hi[y], self.rows.frac[y]);
                for xo in 0..self.out_w {
                    let (c0, c1, fx) = (self.cols.lo[xo], self.cols.hi[xo], self.cols.frac[xo]);
                    let v = g[y * self.out_w + xo];
                    let top = v * (1.0 - fy);
                    let bot = v * fy;
                    dst[r0 * in_w + c0] += top * (1.0 - fx);
                    dst[r0 * in_w + c1] += top * fx;
                    dst[r1 * in_w + c0] += bot * (1.0 - fx);
                    dst[r1 * in_w + c1] += bot * fx;
                }
            }
        }
        d_x
    }
}

/// Align-corners bilinear upsampling of every channel.
pub fn bilinear_upsample(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    Ok(UpsamplePlan::new(x.height(), x.width(), out_h, out_w)?.forward(x))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Cached statistics of a channel normalization forward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

fn check_affine(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    let k = x.channels();
    if gamma.len() != k || beta.len() != k {
        return Err(Error::InvalidShape(format!(
            "normalization affine has {}/{} entries for {k} channels",
            gamma.len(),
            beta.len()
        )));
    }
    if x.plane_len() < 2 {
        return Err(Error::DegenerateVariance { channel: 0 });
    }
    Ok(())
}

/// Per-channel standardization over spatial positions (population variance)
/// followed by the affine `gamma · x̂ + beta`.
pub fn channel_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, NormCache)> {
    check_affine(x, gamma, beta)?;
    let (k, h, w) = x.shape();
    let n = (h * w) as f64;
    let mut normalized = Tensor::zeros(k, h, w);
    let mut out = Tensor::zeros(k, h, w);
    let mut inv_std = Vec::with_capacity(k);
    for c in 0..k {
        let src = x.channel(c);
        let mean = src.iter().sum::<f64>() / n;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(is);
        let (g, b) = (gamma.data()[c], beta.data()[c]);
        let xhat = normalized.channel_mut(c);
        for (d, v) in xhat.iter_mut().zip(src) {
            *d = (v - mean) * is;
        }
        for (o, v) in out.channel_mut(c).iter_mut().zip(normalized.channel(c)) {
            *o = g * v + b;
        }
    }
    Ok((out, NormCache { normalized, inv_std }))
}

/// Returns `(d_x, d_gamma, d_beta)`.
pub fn channel_norm_backward(cache: &NormCache, gamma: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (k, h, w) = d_out.shape();
    let n = (h * w) as f64;
    let mut d_x = Tensor::zeros(k, h, w);
    let mut d_gamma = vec![0.0; k];
    let mut d_beta = vec![0.0; k];
    for c in 0..k {
        let g = d_out.channel(c);
        let xhat = cache.normalized.channel(c);
        let sum_g: f64 = g.iter().sum();
        let sum_gx = dot(g, xhat);
        d_gamma[c] = sum_gx;
        d_beta[c] = sum_g;
        let scale = gamma.data()[c] * cache.inv_std[c] / n;
        for ((d, &gi), &xi) in d_x.channel_mut(c).iter_mut().zip(g).zip(xhat) {
            *d = scale * (n * gi - sum_g - xi * sum_gx);
        }
    }
    (d_x, Tensor::vector(d_gamma), Tensor::vector(d_beta))
}

/// Multiplies each channel by its entry of `scales` (0 for dropped maps).
pub fn scale_channels(x: &Tensor, scales: &[f64]) -> Tensor {
    let mut out = x.clone();
    for (c, &s) in scales.iter().enumerate() {
        for v in out.channel_mut(c) {
            *v *= s;
        }
    }
    out
}

/// Squared error summed over `range` channels, divided by the pixel count.
pub fn mse_subset(recon: &Tensor, target: &Tensor, range: std::ops::Range<usize>) -> Result<f64> {
    check_mse(recon, target, &range)?;
    let n = recon.plane_len() as f64;
    let p = recon.plane_len();
    let a = &recon.data()[range.start * p..range.end * p];
    let b = &target.data()[range.start * p..range.end * p];
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

pub(crate) fn check_mse(recon: &Tensor, target: &Tensor, range: &std::ops::Range<usize>) -> Result<()> {
    if !recon.same_shape(target) {
        return Err(Error::InvalidShape(format!(
            "reconstruction {:?} vs target {:?}",
            recon.shape(),
            target.shape()
        )));
    }
    if range.is_empty() {
        return Err(Error::InvalidParameter("empty channel range".into()));
    }
    if range.end > recon.channels() {
        return Err(Error::InvalidShape(format!(
            "channel range {range:?} outside 0..{}",
            recon.channels()
        )));
    }
    Ok(())
}
