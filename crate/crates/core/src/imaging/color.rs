use super::{GrayImage, RgbImage};
use crate::tensor::Tensor;

/// Relative luminance row of the sRGB → XYZ (D65) matrix.
const Y_FROM_RGB: [f64; 3] = [0.212_672_9, 0.715_152_2, 0.072_175_0];

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

/// Inverse sRGB companding (2.4-exponent piecewise curve).
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lightness(rgb: [f64; 3]) -> f64 {
    let y: f64 = rgb.iter().zip(Y_FROM_RGB).map(|(&c, k)| k * srgb_to_linear(c)).sum();
    // Relative to the D65 white, i.e. the luminance of RGB (1, 1, 1).
    let white: f64 = Y_FROM_RGB.iter().sum();
    let t = y / white;
    let l = if t > LAB_EPSILON {
        116.0 * t.cbrt() - 16.0
    } else {
        LAB_KAPPA * t
    };
    (l / 100.0).clamp(0.0, 1.0)
}

/// CIELAB `L*` of every pixel, divided by 100.
pub fn rgb_to_lightness(img: &RgbImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let t = Tensor::from_fn(1, h, w, |_, y, x| lightness(img.pixel(x, y)));
    GrayImage::new(t).expect("lightness is finite")
}
