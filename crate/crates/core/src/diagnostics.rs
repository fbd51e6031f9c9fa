//! Edge-sparsity diagnostics: how many ReLU-activated regions the decoder
//! produces, the closed-form expectation for blurred random fields, and
//! blur sweeps.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::components::{count_mask_regions, Topology};
use crate::decoder::{fit, DecoderConfig, FitImage};
use crate::encoding::blur_sigma;
use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur_with, Boundary};
use crate::parallel::Exec;
use crate::tensor::Tensor;

/// Mean over channels of the number of 4-connected regions where the
/// activation is positive.
pub fn count_activated_regions(last_hidden: &Tensor) -> f64 {
    let (k, h, w) = last_hidden.shape();
    if k == 0 {
        return 0.0;
    }
    let total: usize = (0..k)
        .map(|c| {
            let mask: Vec<bool> = last_hidden.channel(c).iter().map(|&v| v > 0.0).collect();
            count_mask_regions(&mask, w, h, Topology::Planar)
        })
        .sum();
    total as f64 / k as f64
}

/// Expected number of regions above `z` of a unit-variance Gaussian-blurred
/// white-noise field on an `n × n` grid:
/// `n²/(2σ²) · (2π)^(-3/2) · z · exp(-z²/2)`.
pub fn expected_region_count(n: f64, sigma: f64, z: f64) -> f64 {
    n * n / (2.0 * sigma * sigma) * (2.0 * PI).powf(-1.5) * z * (-0.5 * z * z).exp()
}

/// Standard deviation of a periodic blur of unit white noise.
fn periodic_blur_std(n: usize, sigma: f64) -> Result<f64> {
    let mut impulse = Tensor::zeros(1, n, n);
    impulse.set(0, n / 2, n / 2, 1.0);
    let k = gaussian_blur_with(&impulse, sigma, Boundary::Wrap)?;
    Ok(k.data().iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Periodically blurred standard-normal noise on an `n × n` torus, scaled
/// to unit variance.
pub fn unit_variance_field(n: usize, sigma: f64, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Tensor::from_fn(1, n, n, |_, _, _| StandardNormal.sample(&mut rng));
    let std = periodic_blur_std(n, sigma)?;
    Ok(gaussian_blur_with(&noise, sigma, Boundary::Wrap)?.map(|v| v / std))
}

/// Mean region count above `z` over `samples` torus fields (seeds
/// `seed..seed + samples`). Regions are counted on the torus so the field
/// has no boundary.
pub fn monte_carlo_region_count(n: usize, sigma: f64, z: f64, samples: usize, seed: u64, exec: Exec) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let counts: Result<Vec<usize>> = exec
        .map_range(samples, |i| {
            let f = unit_variance_field(n, sigma, seed.wrapping_add(i as u64))?;
            let mask: Vec<bool> = f.data().iter().map(|&v| v > z).collect();
            Ok(count_mask_regions(&mask, n, n, Topology::Torus))
        })
        .into_iter()
        .collect();
    Ok(counts?.iter().sum::<usize>() as f64 / samples as f64)
}

/// One point of a blur sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    BlurFactor(f64),
    Sigma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub sigma: f64,
    pub avg_regions: f64,
    pub final_loss: f64,
}

/// Fits one decoder (index 0) per sweep point and reports the activated
/// region count of its last hidden layer.
pub fn blur_sweep(img: &FitImage, cfg: &DecoderConfig, points: &[SweepPoint], exec: Exec) -> Result<Vec<SweepRow>> {
    exec.map_range(points.len(), |i| {
        let point = points[i];
        let mut c = cfg.clone();
        match point {
            SweepPoint::BlurFactor(b) => {
                c.blur_factor = b;
                c.sigma_override = None;
            }
            SweepPoint::Sigma(s) => c.sigma_override = Some(s),
        }
        let r = fit(img, &c, 0)?;
        Ok(SweepRow {
            point,
            sigma: c
                .sigma_override
                .unwrap_or_else(|| blur_sigma(c.blur_factor, img.width(), img.height())),
            avg_regions: count_activated_regions(&r.last_hidden),
            final_loss: r.history.last().map_or(f64::NAN, |h| h.total),
        })
    })
    .into_iter()
    .collect()
}

/// Sweep rows as CSV: `parameter,value,sigma,avg_regions,final_loss`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("parameter,value,sigma,avg_regions,final_loss\n");
    for r in rows {
        let (name, v) = match r.point {
            SweepPoint::BlurFactor(b) => ("b", b),
            SweepPoint::Sigma(x) => ("sigma", x),
        };
        s.push_str(&format!("{name},{v},{},{},{}\n", r.sigma, r.avg_regions, r.final_loss));
    }
    s
}
