use super::GrayImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[inline]
fn diff(v: &[f64], i: usize, stride: usize, n: usize) -> f64 {
    // i is the coordinate along the axis, v is indexed by i * stride.
    if i == 0 {
        v[stride] - v[0]
    } else if i == n - 1 {
        v[i * stride] - v[(i - 1) * stride]
    } else {
        (v[(i + 1) * stride] - v[(i - 1) * stride]) / 2.0
    }
}

/// Per pixel, the mean over channels of `√(dx² + dy²)`; central
/// differences inside, one-sided differences on the border.
pub fn mean_gradient_magnitude(x: &Tensor) -> Result<GrayImage> {
    let (k, h, w) = x.shape();
    if w < 2 || h < 2 {
        return Err(Error::InvalidShape(format!(
            "gradient needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let mut acc = vec![0.0; h * w];
    for c in 0..k {
        let p = x.channel(c);
        for y in 0..h {
            let row = &p[y * w..(y + 1) * w];
            for xx in 0..w {
                let dx = diff(row, xx, 1, w);
                let dy = diff(&p[xx..], y, w, h);
                acc[y * w + xx] += (dx * dx + dy * dy).sqrt();
            }
        }
    }
    let kf = k.max(1) as f64;
    for v in &mut acc {
        *v /= kf;
    }
    GrayImage::from_vec(w, h, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_no_gradient() {
        let g = mean_gradient_magnitude(&Tensor::filled(3, 4, 5, 2.0)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_has_unit_gradient() {
        let t = Tensor::from_fn(1, 5, 6, |_, _, x| x as f64);
        let g = mean_gradient_magnitude(&t).unwrap();
        for y in 1..4 {
            for x in 1..5 {
                assert_eq!(g.get(x, y), 1.0);
            }
        }
    }

    #[test]
    fn needs_two_pixels_per_axis() {
        assert!(mean_gradient_magnitude(&Tensor::zeros(1, 1, 5)).is_err());
    }
}
