//! Synthetic test images with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::foreground::BinaryMask;
use crate::imaging::{GrayImage, RgbImage};
use crate::labeling::Labeling;

pub const QUADRANT_COLORS: [[f64; 3]; 4] = [[0.85, 0.2, 0.2], [0.2, 0.75, 0.25], [0.2, 0.3, 0.85], [0.9, 0.85, 0.2]];

fn noise(std: f64) -> Normal<f64> {
    Normal::new(0.0, std.max(0.0)).expect("finite standard deviation")
}

/// Four flat color quadrants plus Gaussian noise (clamped to `[0, 1]`), and
/// the quadrant labeling (0 top-left, 1 top-right, 2 bottom-left,
/// 3 bottom-right).
pub fn quadrants(width: usize, height: usize, noise_std: f64, seed: u64) -> Result<(RgbImage, Labeling)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = noise(noise_std);
    let quad = |x: usize, y: usize| usize::from(x >= width / 2) + 2 * usize::from(y >= height / 2);
    let img = RgbImage::from_fn(width, height, |x, y| {
        QUADRANT_COLORS[quad(x, y)].map(|c| (c + n.sample(&mut rng)).clamp(0.0, 1.0))
    })?;
    let gt = Labeling::new(
        width,
        height,
        (0..width * height).map(|i| quad(i % width, i / width) as u32).collect(),
    )?;
    Ok((img, gt))
}

/// A bright tube (0.8) meandering horizontally across a dark background
/// (0.2), with Gaussian noise, and the tube mask. The tube is about
/// `height/6` thick.
pub fn tube_phantom(width: usize, height: usize, noise_std: f64, seed: u64) -> Result<(GrayImage, BinaryMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (w, h) = (width as f64, height as f64);
    let radius = h / 12.0;
    let mask = BinaryMask::from_fn(width, height, |x, y| {
        let t = x as f64 / w * std::f64::consts::TAU;
        let center = h / 2.0 + h / 6.0 * (t + phase).sin();
        (y as f64 - center).abs() <= radius
    });
    let n = noise(noise_std);
    let slice = GrayImage::from_fn(width, height, |x, y| {
        let base = if mask.get(x, y) { 0.8 } else { 0.2 };
        (base + n.sample(&mut rng)).clamp(0.0, 1.0)
    })?;
    Ok((slice, mask))
}

/// A natural-looking scene: warped Voronoi regions, each with its own
/// color, a smooth illumination gradient and fine texture. Returns the
/// image and the region labeling.
pub fn natural_scene(width: usize, height: usize, seed: u64) -> Result<(RgbImage, Labeling)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = rng.random_range(6..=10);
    let (w, h) = (width as f64, height as f64);
    let sites: Vec<(f64, f64)> = (0..regions)
        .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect();
    let colors: Vec<[f64; 3]> = (0..regions)
        .map(|_| [0; 3].map(|_| rng.random_range(0.1..0.9)))
        .collect();
    let slopes: Vec<(f64, f64)> = (0..regions)
        .map(|_| (rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)))
        .collect();
    let warp: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(1.0..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.06) * w.min(h),
            )
        })
        .collect();
    let region_of = |x: usize, y: usize| {
        let (mut px, mut py) = (x as f64, y as f64);
        for (i, &(freq, phase, amp)) in warp.iter().enumerate() {
            let (u, v) = (px / w, py / h);
            if i % 2 == 0 {
                px += amp * (std::f64::consts::TAU * freq * v + phase).sin();
            } else {
                py += amp * (std::f64::consts::TAU * freq * u + phase).sin();
            }
        }
        sites
            .iter()
            .enumerate()
            .map(|(i, &(sx, sy))| ((px - sx).powi(2) + (py - sy).powi(2), i))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .map(|(_, i)| i)
            .unwrap()
    };
    let labels: Vec<usize> = (0..width * height).map(|i| region_of(i % width, i / width)).collect();
    let texture = noise(0.03);
    let img = RgbImage::from_fn(width, height, |x, y| {
        let r = labels[y * width + x];
        let shade = slopes[r].0 * (x as f64 / w - 0.5) + slopes[r].1 * (y as f64 / h - 0.5);
        colors[r].map(|c| (c + shade + texture.sample(&mut rng)).clamp(0.0, 1.0))
    })?;
    let values: Vec<u64> = labels.iter().map(|&l| l as u64).collect();
    Ok((img, Labeling::from_values(width, height, &values)?))
}
