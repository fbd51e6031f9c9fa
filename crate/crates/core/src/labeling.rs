//! Integer label maps: superpixel partitions and ground-truth segmentations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::components::{connected_components, Components, Topology};
use crate::error::{Error, Result};
use crate::imaging::io::{read_raw, write_atomic, write_raw, RawImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_labels: usize,
}

impl Labeling {
    /// `num_labels` is taken as `max + 1`.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        let num_labels = labels.iter().max().map_or(0, |&m| m as usize + 1);
        Ok(Labeling {
            width,
            height,
            labels,
            num_labels,
        })
    }

    /// Renumbers arbitrary values to `0..n` preserving their order.
    pub fn from_values(width: usize, height: usize, values: &[u64]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &v in values {
            map.entry(v).or_insert(0u32);
        }
        for (i, slot) in map.values_mut().enumerate() {
            *slot = i as u32;
        }
        Self::new(width, height, values.iter().map(|v| map[v]).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn same_dims(&self, other: &Labeling) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_dims(&self, other: &Labeling) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::InvalidShape(format!(
                "labelings are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Pixel count per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_labels];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    pub fn components(&self) -> Components {
        connected_components(&self.labels, self.width, self.height, Topology::Planar, |_| true)
    }

    /// Whether every label is non-empty and 4-connected.
    pub fn is_connected_partition(&self) -> bool {
        let comps = self.components();
        comps.count() == self.num_labels && self.sizes().iter().all(|&s| s > 0)
    }

    /// Drops unused labels and renumbers in row-major order of first
    /// appearance.
    pub fn densified(&self) -> Labeling {
        let mut map = vec![u32::MAX; self.num_labels];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let slot = &mut map[l as usize];
                if *slot == u32::MAX {
                    *slot = next;
                    next += 1;
                }
                *slot
            })
            .collect();
        Labeling {
            width: self.width,
            height: self.height,
            labels,
            num_labels: next as usize,
        }
    }

    /// Whether two labelings induce the same partition, ignoring label ids.
    pub fn same_partition(&self, other: &Labeling) -> bool {
        self.same_dims(other) && self.densified().labels == other.densified().labels
    }

    /// Pixels with a 4-neighbor of a different label.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let l = self.get(x, y);
                out[y * w + x] = (x > 0 && self.get(x - 1, y) != l)
                    || (x + 1 < w && self.get(x + 1, y) != l)
                    || (y > 0 && self.get(x, y - 1) != l)
                    || (y + 1 < h && self.get(x, y + 1) != l);
            }
        }
        out
    }

    /// 16-bit binary PGM (maxval 65535, big-endian samples).
    pub fn to_raw(&self) -> Result<RawImage> {
        if self.num_labels > 65536 {
            return Err(Error::InvalidParameter(format!(
                "{} labels do not fit a 16-bit label map",
                self.num_labels
            )));
        }
        Ok(RawImage {
            width: self.width,
            height: self.height,
            channels: 1,
            maxval: u16::MAX,
            samples: self.labels.iter().map(|&l| l as u16).collect(),
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raw(&self.to_raw()?, path)
    }

    /// Reads a label map from 8/16-bit PGM or PNG. Gray samples are labels
    /// as-is; RGB files get one label per distinct color, in color order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let raw = read_raw(path)?;
        if raw.channels == 1 {
            Self::new(raw.width, raw.height, raw.samples.iter().map(|&s| s as u32).collect())
        } else {
            let packed: Vec<u64> = raw
                .samples
                .chunks_exact(3)
                .map(|p| (p[0] as u64) << 32 | (p[1] as u64) << 16 | p[2] as u64)
                .collect();
            Self::from_values(raw.width, raw.height, &packed)
        }
    }

    /// CSV with header `x,y,label`, one row per pixel in row-major order.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 10 + 12);
        s.push_str("x,y,label\n");
        for y in 0..self.height {
            for x in 0..self.width {
                writeln!(s, "{x},{y},{}", self.get(x, y)).unwrap();
            }
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}
