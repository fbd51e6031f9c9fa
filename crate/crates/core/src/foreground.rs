//! Superpixel-based foreground segmentation for microscopy slices: Weber
//! contrast of each superpixel against its neighbors, thresholded with
//! Li's minimum cross-entropy method.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::clustering::{cluster_with, clustering_rng, ClusterConfig};
use crate::decoder::{extract_embeddings, DecoderConfig, FitImage};
use crate::error::{Error, Result};
use crate::imaging::io::{read_raw, write_raw, RawImage};
use crate::imaging::GrayImage;
use crate::labeling::Labeling;
use crate::parallel::Exec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{} mask values for a {width}x{height} image",
                values.len()
            )));
        }
        Ok(BinaryMask { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let values = (0..width * height).map(|i| f(i % width, i / width)).collect();
        BinaryMask { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "masks are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// 8-bit PGM with 255 for foreground.
    pub fn to_raw(&self) -> RawImage {
        RawImage {
            width: self.width,
            height: self.height,
            channels: 1,
            maxval: 255,
            samples: self.values.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        }
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raw(&self.to_raw(), path)
    }

    /// Any nonzero sample (of any channel) is foreground.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw = read_raw(path)?;
        let values = raw
            .samples
            .chunks_exact(raw.channels)
            .map(|px| px.iter().any(|&s| s != 0))
            .collect();
        Self::new(raw.width, raw.height, values)
    }
}

/// Weber coefficient per superpixel, broadcast to its pixels on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct WeberMap {
    labeling: Labeling,
    coefficients: Vec<f64>,
}

impl WeberMap {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn labeling(&self) -> &Labeling {
        &self.labeling
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.coefficients[self.labeling.get(x, y) as usize]
    }

    pub fn pixel_values(&self) -> Vec<f64> {
        self.labeling
            .labels()
            .iter()
            .map(|&l| self.coefficients[l as usize])
            .collect()
    }

    /// Coefficients of labels that own at least one pixel.
    fn present_coefficients(&self) -> Vec<f64> {
        self.labeling
            .sizes()
            .iter()
            .zip(&self.coefficients)
            .filter(|(&s, _)| s > 0)
            .map(|(_, &c)| c)
            .collect()
    }
}

/// Superpixel ids adjacent (4-neighborhood) to each superpixel, sorted.
pub fn adjacency(sp: &Labeling) -> Vec<Vec<u32>> {
    let (w, h) = (sp.width(), sp.height());
    let mut adj = vec![Vec::new(); sp.num_labels()];
    for y in 0..h {
        for x in 0..w {
            let a = sp.get(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = sp.get(nx, ny);
                    if a != b {
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    }
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// `w_i = (mean_i − mean_N(i)) / mean_N(i)` where `N(i)` is the union of
/// all superpixels adjacent to `i`. A neighborhood mean at or below 1e-6
/// (or no neighbors at all) gives 0 and a warning.
pub fn weber_map(slice: &GrayImage, sp: &Labeling) -> Result<WeberMap> {
    if slice.width() != sp.width() || slice.height() != sp.height() {
        return Err(Error::InvalidShape(format!(
            "slice is {}x{}, labeling is {}x{}",
            slice.width(),
            slice.height(),
            sp.width(),
            sp.height()
        )));
    }
    let n = sp.num_labels();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (&l, &v) in sp.labels().iter().zip(slice.values()) {
        sums[l as usize] += v;
        counts[l as usize] += 1;
    }
    let adj = adjacency(sp);
    let coefficients = (0..n)
        .map(|i| {
            if counts[i] == 0 {
                return 0.0;
            }
            let own = sums[i] / counts[i] as f64;
            let (s, c) = adj[i].iter().fold((0.0, 0usize), |(s, c), &j| {
                (s + sums[j as usize], c + counts[j as usize])
            });
            let neighborhood = if c == 0 { 0.0 } else { s / c as f64 };
            if neighborhood <= 1e-6 {
                log::warn!("superpixel {i}: neighborhood mean {neighborhood:.3e}, Weber coefficient set to 0");
                0.0
            } else {
                (own - neighborhood) / neighborhood
            }
        })
        .collect();
    Ok(WeberMap {
        labeling: sp.clone(),
        coefficients,
    })
}

/// Li's minimum cross-entropy threshold. Values are shifted to be strictly
/// positive (by `−min + 1e-6·range`) before iterating
/// `t ← (μ_b − μ_a)/(ln μ_b − ln μ_a)` from the mean, where `μ_b`/`μ_a`
/// are the means at or below / above `t`; the result is shifted back.
pub fn li_threshold(values: &[f64]) -> Result<f64> {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("threshold input must be finite".into()));
    }
    let range = max - min;
    if values.is_empty() || range <= 0.0 {
        return Err(Error::NoThreshold);
    }
    let shift = -min + 1e-6 * range;
    let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
    let tol = 1e-7 * range;
    let mut t = shifted.iter().sum::<f64>() / shifted.len() as f64;
    for _ in 0..100 {
        let (mut sb, mut nb, mut sa, mut na) = (0.0, 0usize, 0.0, 0usize);
        for &v in &shifted {
            if v <= t {
                sb += v;
                nb += 1;
            } else {
                sa += v;
                na += 1;
            }
        }
        if nb == 0 || na == 0 {
            break;
        }
        let (mb, ma) = (sb / nb as f64, sa / na as f64);
        let next = (mb - ma) / (mb.ln() - ma.ln());
        let done = (next - t).abs() < tol;
        t = next;
        if done {
            break;
        }
    }
    Ok(t - shift)
}

/// Which population Li thresholding runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// One value per superpixel.
    #[default]
    PerSuperpixel,
    /// One value per pixel (area weighted).
    PerPixel,
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::PerSuperpixel => "per-superpixel",
            ThresholdMode::PerPixel => "per-pixel",
        })
    }
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-superpixel" | "superpixel" => Ok(ThresholdMode::PerSuperpixel),
            "per-pixel" | "pixel" => Ok(ThresholdMode::PerPixel),
            other => Err(Error::InvalidParameter(format!("unknown threshold mode `{other}`"))),
        }
    }
}

/// Threshold and mask of all superpixels whose coefficient exceeds it.
pub fn threshold_weber(map: &WeberMap, mode: ThresholdMode) -> Result<(f64, BinaryMask)> {
    let t = match mode {
        ThresholdMode::PerSuperpixel => li_threshold(&map.present_coefficients())?,
        ThresholdMode::PerPixel => li_threshold(&map.pixel_values())?,
    };
    let l = map.labeling();
    let values = l.labels().iter().map(|&s| map.coefficients[s as usize] > t).collect();
    Ok((t, BinaryMask::new(l.width(), l.height(), values)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOptions {
    pub clusters: usize,
    pub mode: ThresholdMode,
    pub exec: Exec,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            clusters: 600,
            mode: ThresholdMode::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSegmentation {
    pub mask: BinaryMask,
    pub superpixels: Labeling,
    pub weber: WeberMap,
    pub threshold: f64,
}

/// Embeddings, superpixels, Weber map and Li threshold for one slice.
pub fn segment_slice(slice: &GrayImage, cfg: &DecoderConfig, opts: &SegmentOptions) -> Result<SliceSegmentation> {
    let embedding = extract_embeddings(&FitImage::from_gray(slice)?, cfg, opts.exec)?;
    let ccfg = ClusterConfig {
        exec: opts.exec,
        ..ClusterConfig::default()
    };
    let superpixels = cluster_with(&embedding, opts.clusters, &ccfg, &mut clustering_rng(cfg.seed))?.labeling;
    let weber = weber_map(slice, &superpixels)?;
    let (threshold, mask) = threshold_weber(&weber, opts.mode)?;
    Ok(SliceSegmentation {
        mask,
        superpixels,
        weber,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weber_two_superpixels() {
        let slice = GrayImage::from_vec(4, 1, vec![0.2, 0.2, 0.1, 0.1]).unwrap();
        let sp = Labeling::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let m = weber_map(&slice, &sp).unwrap();
        assert!((m.coefficients()[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients()[1] + 0.5).abs() < 1e-12);
        assert_eq!(m.get(1, 0), m.coefficients()[0]);
    }

    #[test]
    fn weber_ratio() {
        let slice = GrayImage::from_vec(3, 1, vec![0.3, 0.2, 0.2]).unwrap();
        let sp = Labeling::new(3, 1, vec![0, 1, 1]).unwrap();
        assert!((weber_map(&slice, &sp).unwrap().coefficients()[0] - 0.5).abs() < 1e-12);
        let flat = GrayImage::from_vec(2, 1, vec![0.4, 0.4]).unwrap();
        let sp = Labeling::new(2, 1, vec![0, 1]).unwrap();
        assert_eq!(weber_map(&flat, &sp).unwrap().coefficients(), &[0.0, 0.0]);
    }

    #[test]
    fn dark_neighborhood_gives_zero() {
        let slice = GrayImage::from_vec(2, 1, vec![0.5, 0.0]).unwrap();
        let sp = Labeling::new(2, 1, vec![0, 1]).unwrap();
        assert_eq!(weber_map(&slice, &sp).unwrap().coefficients()[0], 0.0);
        let single = Labeling::new(2, 1, vec![0, 0]).unwrap();
        assert_eq!(weber_map(&slice, &single).unwrap().coefficients(), &[0.0]);
    }

    #[test]
    fn li_separates_two_levels() {
        let v: Vec<f64> = (0..100).map(|i| if i < 50 { 0.0 } else { 10.0 }).collect();
        let t = li_threshold(&v).unwrap();
        assert!(t > 0.0 && t < 10.0, "{t}");
    }

    #[test]
    fn li_constant_input() {
        assert!(matches!(li_threshold(&[3.0; 5]), Err(Error::NoThreshold)));
        assert!(matches!(li_threshold(&[]), Err(Error::NoThreshold)));
    }

    #[test]
    fn threshold_modes_parse() {
        assert_eq!("per-pixel".parse::<ThresholdMode>().unwrap(), ThresholdMode::PerPixel);
        assert_eq!(ThresholdMode::default().to_string(), "per-superpixel");
        assert!("area".parse::<ThresholdMode>().is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let m = BinaryMask::from_fn(3, 2, |x, y| x == y);
        m.save_pgm(&p).unwrap();
        assert_eq!(BinaryMask::load(&p).unwrap(), m);
    }
}
