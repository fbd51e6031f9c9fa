use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How samples outside the image are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Half-sample symmetric mirroring (`d c b a | a b c d | d c b a`).
    #[default]
    Reflect,
    /// Periodic continuation.
    Wrap,
}

impl Boundary {
    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Boundary::Wrap => i.rem_euclid(n) as usize,
            Boundary::Reflect => {
                let m = i.rem_euclid(2 * n);
                (if m >= n { 2 * n - 1 - m } else { m }) as usize
            }
        }
    }
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    Ok(k)
}

/// Separable Gaussian blur of every channel with reflect padding.
pub fn gaussian_blur(img: &Tensor, sigma: f64) -> Result<Tensor> {
    gaussian_blur_with(img, sigma, Boundary::Reflect)
}

pub fn gaussian_blur_with(img: &Tensor, sigma: f64, boundary: Boundary) -> Result<Tensor> {
    let kernel = gaussian_kernel(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (k, h, w) = img.shape();
    let mut tmp = Tensor::zeros(k, h, w);
    let mut out = Tensor::zeros(k, h, w);

    // Tap index tables so the inner loops stay branch-free.
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|d| boundary.index(x + d, w)).collect())
        .collect();
    let rows: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (-r..=r).map(|d| boundary.index(y + d, h)).collect())
        .collect();

    for c in 0..k {
        let src = img.channel(c);
        let mid = tmp.channel_mut(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                mid[y * w + x] = cols[x].iter().zip(&kernel).map(|(&i, kv)| kv * row[i]).sum();
            }
        }
        let mid = tmp.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = rows[y].iter().zip(&kernel).map(|(&i, kv)| kv * mid[i * w + x]).sum();
            }
        }
    }
    Ok(out)
}
