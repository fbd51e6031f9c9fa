//! Decoder input (blurred uniform noise) and the fitting target (RGB plus
//! lightness modulated by randomly offset sinusoidal position encodings).

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, rgb_to_lightness, GrayImage, RgbImage};
use crate::tensor::Tensor;

/// Input blur standard deviation from a size-independent blur factor:
/// `2·⌊b·w·h / 2⌋ + 1`. Always an odd positive integer for `b > 0`.
pub fn blur_sigma(blur_factor: f64, width: usize, height: usize) -> f64 {
    let half = (blur_factor * width as f64 * height as f64 / 2.0).floor();
    2.0 * half.max(0.0) + 1.0
}

/// `k` channels of uniform `[-1, 1]` noise at `w0 × h0`, each blurred with
/// standard deviation `sigma`.
pub fn make_decoder_input<R: Rng + ?Sized>(
    channels: usize,
    width: usize,
    height: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if channels == 0 {
        return Err(Error::InvalidParameter(
            "decoder input needs at least one channel".into(),
        ));
    }
    let noise = Tensor::from_fn(channels, height, width, |_, _, _| rng.random_range(-1.0..=1.0));
    gaussian_blur(&noise, sigma)
}

/// Sinusoidal encodings of the normalized x and y coordinates.
///
/// For each axis and each frequency `2^i`, `i = 1..=l`, four channels
/// `½·(sin θ, −sin θ, cos θ, −cos θ) + ½` with `θ = 2^i·π·ẑ + φ`. The x
/// axis comes first. Every (axis, frequency) pair has its own offset `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    frequencies: usize,
    offsets_x: Vec<f64>,
    offsets_y: Vec<f64>,
    maps: Tensor,
}

fn normalized(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

impl PositionalEncoding {
    /// Draws offsets uniformly from `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(frequencies: usize, width: usize, height: usize, rng: &mut R) -> Result<Self> {
        let ox: Vec<f64> = (0..frequencies).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let oy: Vec<f64> = (0..frequencies).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self::with_offsets(frequencies, width, height, ox, oy)
    }

    pub fn with_offsets(
        frequencies: usize,
        width: usize,
        height: usize,
        offsets_x: Vec<f64>,
        offsets_y: Vec<f64>,
    ) -> Result<Self> {
        if frequencies == 0 {
            return Err(Error::InvalidParameter("at least one frequency is required".into()));
        }
        if offsets_x.len() != frequencies || offsets_y.len() != frequencies {
            return Err(Error::InvalidShape(format!(
                "{frequencies} frequencies need {frequencies} offsets per axis"
            )));
        }
        let mut maps = Tensor::zeros(8 * frequencies, height, width);
        for (axis, offsets) in [&offsets_x, &offsets_y].into_iter().enumerate() {
            for (i, &phi) in offsets.iter().enumerate() {
                let freq = (1u64 << (i + 1)) as f64 * PI;
                let base = axis * 4 * frequencies + 4 * i;
                for y in 0..height {
                    for x in 0..width {
                        let z = if axis == 0 {
                            normalized(x, width)
                        } else {
                            normalized(y, height)
                        };
                        let (s, c) = (freq * z + phi).sin_cos();
                        for (j, v) in [s, -s, c, -c].into_iter().enumerate() {
                            maps.set(base + j, y, x, 0.5 * v + 0.5);
                        }
                    }
                }
            }
        }
        Ok(PositionalEncoding {
            frequencies,
            offsets_x,
            offsets_y,
            maps,
        })
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    pub fn offsets_x(&self) -> &[f64] {
        &self.offsets_x
    }

    pub fn offsets_y(&self) -> &[f64] {
        &self.offsets_y
    }

    pub fn maps(&self) -> &Tensor {
        &self.maps
    }
}

/// The tensor a decoder is fitted to: `(R, G, B, enc₁⊙L, …, enc₈ₗ⊙L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTarget {
    tensor: Tensor,
    frequencies: usize,
}

impl FitTarget {
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn rgb_range(&self) -> Range<usize> {
        0..3
    }

    pub fn spatial_range(&self) -> Range<usize> {
        3..3 + 8 * self.frequencies
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels()
    }
}

/// Target from an RGB image; lightness is CIELAB `L*/100`.
pub fn make_fit_target(img: &RgbImage, enc: &PositionalEncoding) -> Result<FitTarget> {
    make_fit_target_with_lightness(img, &rgb_to_lightness(img), enc)
}

/// Target with an explicit lightness channel (grayscale inputs use their
/// raw intensity).
pub fn make_fit_target_with_lightness(
    img: &RgbImage,
    lightness: &GrayImage,
    enc: &PositionalEncoding,
) -> Result<FitTarget> {
    let (w, h) = (img.width(), img.height());
    let maps = enc.maps();
    if maps.width() != w || maps.height() != h || lightness.width() != w || lightness.height() != h {
        return Err(Error::InvalidShape(format!(
            "image {w}x{h}, lightness {}x{}, encoding {}x{}",
            lightness.width(),
            lightness.height(),
            maps.width(),
            maps.height()
        )));
    }
    let mut spatial = maps.clone();
    let l = lightness.values();
    for c in 0..spatial.channels() {
        for (v, li) in spatial.channel_mut(c).iter_mut().zip(l) {
            *v *= li;
        }
    }
    Ok(FitTarget {
        tensor: Tensor::concat_channels(&[img.tensor().clone(), spatial])?,
        frequencies: enc.frequencies(),
    })
}
