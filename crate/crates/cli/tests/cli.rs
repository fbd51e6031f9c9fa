use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddseg::clustering::grid_seed_count;
use ddseg::foreground::BinaryMask;
use ddseg::imaging::{save_image, GrayImage, Image};
use ddseg::metrics::count_regions;
use ddseg::synthetic::{natural_scene, quadrants, tube_phantom};
use ddseg::Labeling;
use tempfile::TempDir;

const FAST: [&str; 10] = [
    "--preset",
    "downsized",
    "--steps",
    "40",
    "--decoders",
    "2",
    "--channels",
    "8",
    "--blocks",
    "2",
];

fn ddseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddseg"))
        .args(args)
        .env_remove("DDSEG_THREADS")
        .output()
        .expect("running ddseg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quadrant_image(dir: &TempDir) -> (PathBuf, Labeling) {
    let (img, gt) = quadrants(32, 32, 0.05, 1).unwrap();
    let path = dir.path().join("quad.ppm");
    save_image(&Image::Rgb(img), &path).unwrap();
    (path, gt)
}

fn superpixels(image: &Path, out: &Path, clusters: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "superpixels",
        s(image),
        "-o",
        s(out),
        "--clusters",
        clusters,
        "--seed",
        "7",
    ];
    args.extend(FAST);
    args.extend(extra);
    ddseg(&args)
}

#[test]
fn superpixels_are_deterministic_and_reproducible_from_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let o = superpixels(&img, &a, "16", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(superpixels(&img, &b, "16", &["--threads", "2"]).status.success());
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let l = Labeling::load(&a).unwrap();
    let (n_w, n_h) = grid_seed_count(16, 32, 32).unwrap();
    assert!(l.is_connected_partition());
    assert_eq!(count_regions(&l), n_w * n_h);

    let sidecar = dir.path().join("a.pgm.cfg");
    let meta = std::fs::read_to_string(&sidecar).unwrap();
    assert!(meta.contains("seed=7"));
    assert!(meta.contains("steps=40"));
    let c = dir.path().join("c.pgm");
    let o = ddseg(&["superpixels", s(&img), "-o", s(&c), "--config", s(&sidecar)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(bytes, std::fs::read(&c).unwrap());
}

#[test]
fn superpixel_side_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    let out = dir.path().join("l.pgm");
    let overlay = dir.path().join("o.png");
    let csv = dir.path().join("l.csv");
    let loss = dir.path().join("loss.csv");
    let o = superpixels(
        &img,
        &out,
        "16",
        &["--overlay", s(&overlay), "--csv", s(&csv), "--loss-history", s(&loss)],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let labels = Labeling::load(&out).unwrap();
    let Image::Rgb(ov) = ddseg::imaging::load_image(&overlay).unwrap() else {
        panic!("overlay should be color");
    };
    let boundary = labels.boundary_mask();
    for y in 0..32 {
        for x in 0..32 {
            if boundary[y * 32 + x] {
                assert_eq!(ov.pixel(x, y), [1.0, 0.0, 0.0]);
            }
        }
    }
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 32 * 32);
    let loss = std::fs::read_to_string(&loss).unwrap();
    assert!(loss.starts_with("decoder,step,total,recon,spatial"));
    assert_eq!(loss.lines().count(), 1 + 2 * 40);
}

#[test]
fn zero_clusters_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    let out = dir.path().join("l.pgm");
    let o = ddseg(&["superpixels", s(&img), "-o", s(&out), "--clusters", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn failed_run_leaves_no_label_map() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    let out = dir.path().join("l.pgm");
    // More clusters than pixels.
    let o = superpixels(&img, &out, "5000", &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("too many clusters"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn evaluate_identical_and_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gt) = quadrants(16, 12, 0.0, 0).unwrap();
    let gt_path = dir.path().join("gt.pgm");
    gt.save_pgm(&gt_path).unwrap();
    let o = ddseg(&["evaluate", s(&gt_path), s(&gt_path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("gt,mean,use,0\n"));
    assert!(text.contains("gt,mean,br,1\n"));
    assert!(text.contains("gt,mean,asa,1\n"));
    assert!(text.contains("gt,mean,num_regions,4\n"));

    // Two halves of the truth: one coarser, one identical.
    let halves = Labeling::new(16, 12, gt.labels().iter().map(|&l| l % 2).collect()).unwrap();
    let halves_path = dir.path().join("halves.pgm");
    halves.save_pgm(&halves_path).unwrap();
    let csv = dir.path().join("report.csv");
    let o = ddseg(&["evaluate", s(&gt_path), s(&gt_path), s(&halves_path), "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap_or_else(|| panic!("{key} missing"))
            .parse()
            .unwrap()
    };
    let (u0, u1) = (value("gt,0,use,"), value("gt,1,use,"));
    assert_eq!(value("gt,mean,use,"), (u0 + u1) / 2.0);
    assert!(dir.path().join("report.csv.cfg").exists());
}

#[test]
fn evaluate_missing_gt_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let (_, gt) = quadrants(8, 8, 0.0, 0).unwrap();
    let labels = dir.path().join("l.pgm");
    gt.save_pgm(&labels).unwrap();
    let missing = dir.path().join("nowhere").join("gt.pgm");
    let o = ddseg(&["evaluate", s(&labels), s(&missing)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn evaluate_rejects_mismatched_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    quadrants(8, 8, 0.0, 0).unwrap().1.save_pgm(&a).unwrap();
    quadrants(8, 6, 0.0, 0).unwrap().1.save_pgm(&b).unwrap();
    let o = ddseg(&["evaluate", s(&a), s(&b)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("8x6"));
}

#[test]
fn segment_vessels_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = ddseg(&["segment-vessels", s(dir.path()), "-o", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no slices"));
}

#[test]
fn segment_vessels_continues_past_bad_slices() {
    let dir = tempfile::tempdir().unwrap();
    let slices = dir.path().join("slices");
    let gold = dir.path().join("gold");
    std::fs::create_dir_all(&slices).unwrap();
    std::fs::create_dir_all(&gold).unwrap();
    for seed in 0..2 {
        let (slice, mask) = tube_phantom(24, 24, 0.05, seed).unwrap();
        save_image(&Image::Gray(slice), slices.join(format!("s{seed}.pgm"))).unwrap();
        mask.save_pgm(gold.join(format!("s{seed}.pgm"))).unwrap();
    }
    // A color file is not a slice.
    let (color, _) = quadrants(24, 24, 0.0, 0).unwrap();
    save_image(&Image::Rgb(color), slices.join("z.ppm")).unwrap();

    let out = dir.path().join("out");
    let mut args = vec![
        "segment-vessels",
        s(&slices),
        "-o",
        s(&out),
        "--gold",
        s(&gold),
        "--clusters",
        "30",
    ];
    args.extend(FAST);
    let o = ddseg(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1 slice(s) failed"), "{}", stderr(&o));
    assert!(stderr(&o).contains("z.ppm"));

    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "slice,threshold,foreground,se,sp,dc,ji");
    assert_eq!(rows.len(), 3);
    for (i, row) in rows[1..].iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], format!("s{i}"));
        let dc: f64 = fields[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&dc));
        let mask = BinaryMask::load(out.join(format!("s{i}_mask.pgm"))).unwrap();
        assert_eq!(mask.count().to_string(), fields[2]);
    }
    assert!(!out.join("z_mask.pgm").exists());
    assert!(std::fs::read_to_string(out.join("run.cfg"))
        .unwrap()
        .contains("preset=downsized"));
}

#[test]
fn invalid_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    for bad in ["gamma:1", "b:x", "b:", "sigma:-2"] {
        let o = ddseg(&["diagnose", s(&img), "--sweep", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn diagnose_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = quadrant_image(&dir);
    let mut args = vec!["diagnose", s(&img), "--sweep", "sigma:3"];
    args.extend(FAST);
    let o = ddseg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "parameter,value,sigma,avg_regions,final_loss");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("sigma,3,3,"));
}

#[test]
fn diagnose_blur_sweep_trend() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = natural_scene(96, 64, 11).unwrap();
    let path = dir.path().join("crop.ppm");
    save_image(&Image::Rgb(img), &path).unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = ddseg(&[
        "diagnose",
        s(&path),
        "--sweep",
        "b:0.00005,0.0001,0.0002,0.0004",
        "--preset",
        "downsized",
        "--decoders",
        "1",
        "--steps",
        "100",
        "--csv",
        s(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let regions: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(regions.len(), 4);
    assert!(regions.windows(2).all(|w| w[1] <= w[0]), "{regions:?}");
}

#[test]
fn gray_slices_round_trip_through_superpixels() {
    let dir = tempfile::tempdir().unwrap();
    let slice = GrayImage::from_fn(20, 20, |x, y| ((x + y) % 7) as f64 / 7.0).unwrap();
    let path = dir.path().join("g.pgm");
    save_image(&Image::Gray(slice), &path).unwrap();
    let out = dir.path().join("l.pgm");
    let o = superpixels(&path, &out, "9", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Labeling::load(&out).unwrap().is_connected_partition());
}
