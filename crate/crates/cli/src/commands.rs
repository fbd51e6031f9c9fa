use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddseg::clustering::{cluster_with, clustering_rng, ClusterConfig};
use ddseg::decoder::{fit_ensemble, EmbeddingMap, FitImage};
use ddseg::diagnostics::{blur_sweep, sweep_csv, SweepPoint};
use ddseg::foreground::{segment_slice, BinaryMask, SegmentOptions};
use ddseg::imaging::io::{load_image, save_image, write_atomic};
use ddseg::imaging::{Image, RgbImage};
use ddseg::metrics::{binary_metrics, evaluate, report_csv};
use ddseg::{Exec, Labeling};
use log::{info, warn};

use crate::config::{sidecar_path, RunConfig};

pub const OVERLAY_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

/// Input image with superpixel boundaries painted red.
pub fn overlay(img: &Image, sp: &Labeling) -> Result<RgbImage> {
    let rgb = match img {
        Image::Rgb(rgb) => rgb.clone(),
        Image::Gray(g) => g.to_rgb()?,
    };
    let boundary = sp.boundary_mask();
    let w = rgb.width();
    Ok(RgbImage::from_fn(w, rgb.height(), |x, y| {
        if boundary[y * w + x] {
            OVERLAY_COLOR
        } else {
            rgb.pixel(x, y)
        }
    })?)
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

pub struct SuperpixelOutputs<'a> {
    pub labels: &'a Path,
    pub overlay: Option<&'a Path>,
    pub csv: Option<&'a Path>,
    pub loss_history: Option<&'a Path>,
}

pub fn superpixels(image: &Path, run: &RunConfig, out: &SuperpixelOutputs) -> Result<()> {
    let img = load_image(image)?;
    let fit_img = FitImage::from_image(&img)?;
    info!(
        "fitting {} decoders to {}x{} image",
        run.decoder.decoders,
        img.width(),
        img.height()
    );
    let fits = fit_ensemble(&fit_img, &run.decoder, Exec::Parallel)?;
    let embedding = EmbeddingMap::from_fits(&fits)?;
    let cfg = ClusterConfig {
        exec: Exec::Parallel,
        ..ClusterConfig::default()
    };
    let outcome = cluster_with(&embedding, run.clusters, &cfg, &mut clustering_rng(run.decoder.seed))?;
    let sp = outcome.labeling;
    info!(
        "{} superpixels from {} seeds after {} iterations",
        sp.num_labels(),
        outcome.seeds,
        outcome.iterations
    );
    let overlay_img = out.overlay.map(|_| overlay(&img, &sp)).transpose()?;

    sp.save_pgm(out.labels)?;
    if let Some(p) = out.csv {
        sp.save_csv(p)?;
    }
    if let (Some(p), Some(o)) = (out.overlay, overlay_img) {
        save_image(&Image::Rgb(o), p)?;
    }
    if let Some(p) = out.loss_history {
        let mut s = String::from("decoder,step,total,recon,spatial\n");
        for f in &fits {
            for r in &f.history {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    f.decoder_index, r.step, r.total, r.recon, r.spatial
                )
                .unwrap();
            }
        }
        write_atomic(p, s.as_bytes())?;
    }
    let meta = run.to_text(&[("input", path_text(image)), ("output", path_text(out.labels))]);
    write_atomic(sidecar_path(out.labels), meta.as_bytes())?;
    Ok(())
}

pub fn evaluate_labels(labels: &Path, gts: &[PathBuf], csv: Option<&Path>) -> Result<()> {
    let sp = Labeling::load(labels)?;
    let truths = gts
        .iter()
        .map(|p| Labeling::load(p).with_context(|| format!("loading ground truth {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for (p, gt) in gts.iter().zip(&truths) {
        if !gt.same_dims(&sp) {
            bail!(
                "{} is {}x{} but {} is {}x{}",
                p.display(),
                gt.width(),
                gt.height(),
                labels.display(),
                sp.width(),
                sp.height()
            );
        }
    }
    let report = evaluate(&sp, &truths)?;
    let name = labels
        .file_stem()
        .map_or_else(|| "labels".into(), |s| s.to_string_lossy().into_owned());
    let text = report_csv(&[(name, report)]);
    match csv {
        Some(p) => {
            write_atomic(p, text.as_bytes())?;
            let gt_list: Vec<String> = gts.iter().map(|p| path_text(p)).collect();
            let meta = format!(
                "# ddseg {}\ncommand=evaluate\ninput={}\ngt={}\noutput={}\n",
                env!("CARGO_PKG_VERSION"),
                path_text(labels),
                gt_list.join(";"),
                path_text(p)
            );
            write_atomic(sidecar_path(p), meta.as_bytes())?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

const SLICE_EXTENSIONS: [&str; 4] = ["pgm", "png", "ppm", "pnm"];

fn list_slices(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut slices: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading slice directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| SLICE_EXTENSIONS.contains(&e.to_string_lossy().to_lowercase().as_str()))
        })
        .collect();
    slices.sort();
    Ok(slices)
}

fn gold_for(gold_dir: &Path, slice: &Path) -> Option<PathBuf> {
    let stem = slice.file_stem()?;
    SLICE_EXTENSIONS
        .iter()
        .map(|e| gold_dir.join(stem).with_extension(e))
        .find(|p| p.is_file())
}

struct SliceResult {
    name: String,
    threshold: f64,
    foreground: usize,
    scores: Option<[f64; 4]>,
    mask: BinaryMask,
}

fn segment_one(path: &Path, run: &RunConfig, gold_dir: Option<&Path>) -> Result<SliceResult> {
    let slice = match load_image(path)? {
        Image::Gray(g) => g,
        Image::Rgb(_) => bail!("{} is a color image; slices must be gray", path.display()),
    };
    let opts = SegmentOptions {
        clusters: run.clusters,
        mode: run.threshold_mode,
        exec: Exec::Parallel,
    };
    let seg = segment_slice(&slice, &run.decoder, &opts)?;
    let scores = match gold_dir.and_then(|d| gold_for(d, path)) {
        Some(g) => {
            let gold = BinaryMask::load(&g)?;
            let m = binary_metrics(&seg.mask, &gold).with_context(|| format!("comparing with {}", g.display()))?;
            Some([m.se, m.sp, m.dc, m.ji])
        }
        None => None,
    };
    Ok(SliceResult {
        name: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        threshold: seg.threshold,
        foreground: seg.mask.count(),
        scores,
        mask: seg.mask,
    })
}

/// Segments every slice in `dir`, writing `<stem>_mask.pgm` and
/// `metrics.csv` to `out_dir`. Failed slices are logged and skipped;
/// the returned list names them.
pub fn segment_vessels(dir: &Path, out_dir: &Path, gold: Option<&Path>, run: &RunConfig) -> Result<Vec<String>> {
    let slices = list_slices(dir)?;
    if slices.is_empty() {
        bail!("no slices (.pgm, .png, .ppm, .pnm) in {}", dir.display());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let results = Exec::Parallel.map_range(slices.len(), |i| segment_one(&slices[i], run, gold));

    let mut csv = String::from("slice,threshold,foreground,se,sp,dc,ji\n");
    let mut failures = Vec::new();
    for (path, res) in slices.iter().zip(results) {
        match res {
            Ok(r) => {
                r.mask.save_pgm(out_dir.join(format!("{}_mask.pgm", r.name)))?;
                write!(csv, "{},{},{}", r.name, r.threshold, r.foreground).unwrap();
                match r.scores {
                    Some(s) => writeln!(csv, ",{},{},{},{}", s[0], s[1], s[2], s[3]).unwrap(),
                    None => csv.push_str(",,,,\n"),
                }
            }
            Err(e) => {
                warn!("{}: {e:#}", path.display());
                failures.push(format!("{}: {e:#}", path.display()));
            }
        }
    }
    write_atomic(out_dir.join("metrics.csv"), csv.as_bytes())?;
    let meta = run.to_text(&[("input", path_text(dir)), ("output", path_text(out_dir))]);
    write_atomic(out_dir.join("run.cfg"), meta.as_bytes())?;
    Ok(failures)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<SweepPoint>);

/// Parses `b:0.0001,0.0002` or `sigma:1,3,5`. A bare list means blur factors.
pub fn parse_sweep(text: &str) -> std::result::Result<Sweep, String> {
    let (kind, list) = match text.split_once(':') {
        Some((k, l)) => (k.trim(), l),
        None => ("b", text),
    };
    let make: fn(f64) -> SweepPoint = match kind {
        "b" | "blur" | "blur-factor" => SweepPoint::BlurFactor,
        "sigma" => SweepPoint::Sigma,
        other => return Err(format!("unknown sweep parameter `{other}` (expected b or sigma)")),
    };
    let values = list
        .split(',')
        .map(|v| {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("`{}` is not a number", v.trim()))?;
            if x > 0.0 && x.is_finite() {
                Ok(make(x))
            } else {
                Err(format!("sweep value {x} must be positive"))
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("sweep needs at least one value".into());
    }
    Ok(Sweep(values))
}

pub fn diagnose(image: &Path, points: &[SweepPoint], run: &RunConfig, csv: Option<&Path>) -> Result<()> {
    let img = FitImage::from_image(&load_image(image)?)?;
    let rows = blur_sweep(&img, &run.decoder, points, Exec::Parallel)?;
    let text = sweep_csv(&rows);
    match csv {
        Some(p) => {
            write_atomic(p, text.as_bytes())?;
            let meta = run.to_text(&[("input", path_text(image)), ("output", path_text(p))]);
            write_atomic(sidecar_path(p), meta.as_bytes())?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
