//! Superpixel quality metrics (undersegmentation error, boundary recall,
//! achievable segmentation accuracy, compactness) and binary
//! segmentation metrics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::components::{neighbors4, Topology};
use crate::error::{Error, Result};
use crate::foreground::BinaryMask;
use crate::labeling::Labeling;

/// Number of 4-connected regions; two islands of one label count twice.
pub fn count_regions(labeling: &Labeling) -> usize {
    labeling.components().count()
}

/// Pixel counts `|S ∩ G|` for every overlapping (superpixel, segment) pair.
fn overlaps(sp: &Labeling, gt: &Labeling) -> HashMap<(u32, u32), usize> {
    let mut m = HashMap::new();
    for (&s, &g) in sp.labels().iter().zip(gt.labels()) {
        *m.entry((s, g)).or_insert(0) += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UseVariant {
    /// `(1/N)·[Σ_G Σ_{S∩G≠∅} |S| − N]`.
    #[default]
    TotalOverlap,
    /// `(1/N)·Σ_G Σ_{S∩G≠∅} min(|S∩G|, |S∖G|)`.
    MinInOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UseOptions {
    pub variant: UseVariant,
    /// A superpixel counts as overlapping a segment only if the shared
    /// area exceeds this fraction of the superpixel.
    pub min_overlap: f64,
}

pub fn undersegmentation_error(sp: &Labeling, gt: &Labeling) -> Result<f64> {
    undersegmentation_error_with(sp, gt, &UseOptions::default())
}

pub fn undersegmentation_error_with(sp: &Labeling, gt: &Labeling, opts: &UseOptions) -> Result<f64> {
    sp.check_dims(gt)?;
    let n = sp.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sizes = sp.sizes();
    let mut total = 0usize;
    for (&(s, _), &inter) in &overlaps(sp, gt) {
        let size = sizes[s as usize];
        if inter as f64 <= opts.min_overlap * size as f64 {
            continue;
        }
        total += match opts.variant {
            UseVariant::TotalOverlap => size,
            UseVariant::MinInOut => inter.min(size - inter),
        };
    }
    let leak = match opts.variant {
        // With a positive minimum overlap the sum can fall below N.
        UseVariant::TotalOverlap => total as f64 - n as f64,
        UseVariant::MinInOut => total as f64,
    };
    Ok(leak / n as f64)
}

/// Fraction of ground-truth boundary pixels with a superpixel boundary
/// pixel within Chebyshev distance 2. A ground truth without boundaries
/// gives 1.
pub fn boundary_recall(sp: &Labeling, gt: &Labeling) -> Result<f64> {
    boundary_recall_within(sp, gt, 2)
}

pub fn boundary_recall_within(sp: &Labeling, gt: &Labeling, radius: usize) -> Result<f64> {
    sp.check_dims(gt)?;
    let (w, h) = (sp.width(), sp.height());
    let gb = gt.boundary_mask();
    let sb = sp.boundary_mask();
    let mut total = 0usize;
    let mut hit = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !gb[y * w + x] {
                continue;
            }
            total += 1;
            let found = (y.saturating_sub(radius)..=(y + radius).min(h - 1))
                .any(|yy| (x.saturating_sub(radius)..=(x + radius).min(w - 1)).any(|xx| sb[yy * w + xx]));
            if found {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

/// `(1/N)·Σ_S max_G |S ∩ G|`.
pub fn achievable_segmentation_accuracy(sp: &Labeling, gt: &Labeling) -> Result<f64> {
    sp.check_dims(gt)?;
    if sp.is_empty() {
        return Ok(1.0);
    }
    let mut best = vec![0usize; sp.num_labels()];
    for (&(s, _), &inter) in &overlaps(sp, gt) {
        let b = &mut best[s as usize];
        *b = (*b).max(inter);
    }
    Ok(best.iter().sum::<usize>() as f64 / sp.len() as f64)
}

/// Perimeter of every label in unit pixel edges, image border included.
pub fn perimeters(sp: &Labeling) -> Vec<usize> {
    let (w, h) = (sp.width(), sp.height());
    let labels = sp.labels();
    let mut p = vec![0usize; sp.num_labels()];
    for (i, &l) in labels.iter().enumerate() {
        let inner = neighbors4(i, w, h, Topology::Planar)
            .filter(|&j| labels[j] == l)
            .count();
        p[l as usize] += 4 - inner;
    }
    p
}

/// `(1/N)·Σ_S |S|·Q(S)` with `Q(S) = min(1, 4π|S|/P(S)²)`.
pub fn compactness(sp: &Labeling) -> f64 {
    if sp.is_empty() {
        return 0.0;
    }
    let sum: f64 = sp
        .sizes()
        .iter()
        .zip(perimeters(sp))
        .filter(|(&s, _)| s > 0)
        .map(|(&s, p)| {
            let q = (4.0 * PI * s as f64 / (p * p) as f64).min(1.0);
            s as f64 * q
        })
        .sum();
    sum / sp.len() as f64
}

/// Metrics against one ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtMetrics {
    pub use_error: f64,
    pub br: f64,
    pub asa: f64,
}

pub fn gt_metrics(sp: &Labeling, gt: &Labeling, opts: &UseOptions) -> Result<GtMetrics> {
    Ok(GtMetrics {
        use_error: undersegmentation_error_with(sp, gt, opts)?,
        br: boundary_recall(sp, gt)?,
        asa: achievable_segmentation_accuracy(sp, gt)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub use_error: f64,
    pub br: f64,
    pub asa: f64,
    pub co: f64,
    pub num_regions: usize,
    pub per_gt: Vec<GtMetrics>,
}

/// USE, BR and ASA averaged over the ground truths; CO and the region
/// count computed once.
pub fn evaluate(sp: &Labeling, gts: &[Labeling]) -> Result<MetricReport> {
    evaluate_with(sp, gts, &UseOptions::default())
}

pub fn evaluate_with(sp: &Labeling, gts: &[Labeling], opts: &UseOptions) -> Result<MetricReport> {
    if gts.is_empty() {
        return Err(Error::InvalidParameter("at least one ground truth is required".into()));
    }
    let per_gt = gts
        .iter()
        .map(|gt| gt_metrics(sp, gt, opts))
        .collect::<Result<Vec<_>>>()?;
    let n = per_gt.len() as f64;
    Ok(MetricReport {
        use_error: per_gt.iter().map(|m| m.use_error).sum::<f64>() / n,
        br: per_gt.iter().map(|m| m.br).sum::<f64>() / n,
        asa: per_gt.iter().map(|m| m.asa).sum::<f64>() / n,
        co: compactness(sp),
        num_regions: count_regions(sp),
        per_gt,
    })
}

/// CSV with header `image,gt,metric,value`: one row per image, ground
/// truth and metric, the image mean (`gt` = `mean`) and, last, the mean
/// over all images (`image` = `aggregate`).
pub fn report_csv(reports: &[(String, MetricReport)]) -> String {
    let mut s = String::from("image,gt,metric,value\n");
    for (name, r) in reports {
        for (i, m) in r.per_gt.iter().enumerate() {
            writeln!(s, "{name},{i},use,{}", m.use_error).unwrap();
            writeln!(s, "{name},{i},br,{}", m.br).unwrap();
            writeln!(s, "{name},{i},asa,{}", m.asa).unwrap();
        }
        write_summary(&mut s, name, r.use_error, r.br, r.asa, r.co, r.num_regions as f64);
    }
    if !reports.is_empty() {
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
        write_summary(
            &mut s,
            "aggregate",
            mean(|r| r.use_error),
            mean(|r| r.br),
            mean(|r| r.asa),
            mean(|r| r.co),
            mean(|r| r.num_regions as f64),
        );
    }
    s
}

fn write_summary(s: &mut String, image: &str, use_error: f64, br: f64, asa: f64, co: f64, regions: f64) {
    writeln!(s, "{image},mean,use,{use_error}").unwrap();
    writeln!(s, "{image},mean,br,{br}").unwrap();
    writeln!(s, "{image},mean,asa,{asa}").unwrap();
    writeln!(s, "{image},mean,co,{co}").unwrap();
    writeln!(s, "{image},mean,num_regions,{regions}").unwrap();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_masks(pred: &BinaryMask, gold: &BinaryMask) -> Result<Self> {
        pred.check_dims(gold)?;
        let mut c = ConfusionCounts {
            tp: 0,
            tn: 0,
            fp: 0,
            fn_: 0,
        };
        for (&p, &g) in pred.values().iter().zip(gold.values()) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Sensitivity, specificity, Dice and Jaccard. A ratio with an empty
    /// denominator is 1 when the prediction agrees (nothing to find and
    /// nothing wrongly found), else 0.
    pub fn metrics(&self) -> BinaryMetrics {
        let ratio = |num: usize, den: usize, agree: bool| {
            if den == 0 {
                if agree {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let (tp, tn, fp, fn_) = (self.tp, self.tn, self.fp, self.fn_);
        BinaryMetrics {
            se: ratio(tp, tp + fn_, fp == 0),
            sp: ratio(tn, tn + fp, fn_ == 0),
            dc: ratio(2 * tp, 2 * tp + fp + fn_, true),
            ji: ratio(tp, tp + fp + fn_, true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub se: f64,
    pub sp: f64,
    pub dc: f64,
    pub ji: f64,
}

pub fn binary_metrics(pred: &BinaryMask, gold: &BinaryMask) -> Result<BinaryMetrics> {
    Ok(ConfusionCounts::from_masks(pred, gold)?.metrics())
}
