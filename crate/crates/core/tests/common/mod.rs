//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod grad_suite;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;

use ddseg::autodiff::{Graph, Var};
use ddseg::{Labeling, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut impl Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(c, h, w, |_, _, _| r.random_range(lo..hi))
}

/// Relative error `‖a − n‖ / (‖a‖ + ‖n‖)` between two gradient tensors.
pub fn rel_err(a: &Tensor, n: &Tensor) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.data().iter().zip(n.data()).map(|(x, y)| x - y));
    let scale = norm(&mut a.data().iter().copied()) + norm(&mut n.data().iter().copied());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Worst relative error between reverse-mode gradients and central
/// differences (step `h`) over all parameters. `build` records a scalar
/// loss from the parameter leaves; it must be deterministic.
pub fn gradient_check(params: &[Tensor], h: f64, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    gradient_check_with(params, h, |g, ps| {
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        (build(g, &vars), vars)
    })
}

/// Like [`gradient_check`], but `build` creates the leaves itself and
/// returns them (in parameter order) next to the loss.
pub fn gradient_check_with(params: &[Tensor], h: f64, build: impl Fn(&mut Graph, &[Tensor]) -> (Var, Vec<Var>)) -> f64 {
    let eval = |ps: &[Tensor]| {
        let mut g = Graph::new();
        let (root, _) = build(&mut g, ps);
        g.value(root).data()[0]
    };
    let mut g = Graph::new();
    let (root, vars) = build(&mut g, params);
    g.backward(root).unwrap();
    let mut worst: f64 = 0.0;
    let mut ps = params.to_vec();
    for (i, p) in params.iter().enumerate() {
        let analytic = g
            .grad(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(p.channels(), p.height(), p.width()));
        let mut numeric = analytic.clone();
        for j in 0..p.len() {
            let orig = ps[i].data()[j];
            ps[i].data_mut()[j] = orig + h;
            let up = eval(&ps);
            ps[i].data_mut()[j] = orig - h;
            let down = eval(&ps);
            ps[i].data_mut()[j] = orig;
            numeric.data_mut()[j] = (up - down) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Whether every central difference at step `h` agrees with the one at
/// `h/10` (relative 1e-4). Fails when a non-differentiable point such as
/// a ReLU kink lies within `±h` of the parameters.
pub fn smooth_within(params: &[Tensor], h: f64, build: impl Fn(&mut Graph, &[Tensor]) -> (Var, Vec<Var>)) -> bool {
    let eval = |ps: &[Tensor]| {
        let mut g = Graph::new();
        let (root, _) = build(&mut g, ps);
        g.value(root).data()[0]
    };
    let mut ps = params.to_vec();
    let mut diff = |i: usize, j: usize, step: f64| {
        let orig = ps[i].data()[j];
        ps[i].data_mut()[j] = orig + step;
        let up = eval(&ps);
        ps[i].data_mut()[j] = orig - step;
        let down = eval(&ps);
        ps[i].data_mut()[j] = orig;
        (up - down) / (2.0 * step)
    };
    for (i, p) in params.iter().enumerate() {
        for j in 0..p.len() {
            let (coarse, fine) = (diff(i, j, h), diff(i, j, h / 10.0));
            if (coarse - fine).abs() > 1e-4 * coarse.abs().max(fine.abs()).max(1e-3) {
                return false;
            }
        }
    }
    true
}

/// Random labeling of at most 12×12 pixels: either independent random
/// labels or Voronoi-like blobs, so both fragmented and compact cases occur.
pub fn random_labeling(r: &mut impl Rng) -> Labeling {
    let w = r.random_range(1..=12);
    let h = r.random_range(1..=12);
    random_labeling_sized(r, w, h)
}

pub fn random_labeling_sized(r: &mut impl Rng, w: usize, h: usize) -> Labeling {
    let k = r.random_range(1..=6u32);
    let labels: Vec<u32> = if r.random_bool(0.5) {
        (0..w * h).map(|_| r.random_range(0..k)).collect()
    } else {
        let sites: Vec<(f64, f64)> = (0..k)
            .map(|_| (r.random_range(0.0..w as f64), r.random_range(0.0..h as f64)))
            .collect();
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (0..k)
                    .min_by(|&a, &b| {
                        let da = (x - sites[a as usize].0).powi(2) + (y - sites[a as usize].1).powi(2);
                        let db = (x - sites[b as usize].0).powi(2) + (y - sites[b as usize].1).powi(2);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap()
            })
            .collect()
    };
    Labeling::new(w, h, labels).unwrap()
}

/// Two random labelings of the same size.
pub fn random_pair(r: &mut impl Rng) -> (Labeling, Labeling) {
    let a = random_labeling(r);
    let b = random_labeling_sized(r, a.width(), a.height());
    (a, b)
}

fn at(l: &Labeling, x: i64, y: i64) -> Option<u32> {
    if x < 0 || y < 0 || x >= l.width() as i64 || y >= l.height() as i64 {
        None
    } else {
        Some(l.get(x as usize, y as usize))
    }
}

const DIRS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Breadth-first flood fill region count.
pub fn oracle_count_regions(l: &Labeling) -> usize {
    let (w, h) = (l.width() as i64, l.height() as i64);
    let mut seen = vec![vec![false; w as usize]; h as usize];
    let mut regions = 0;
    for y in 0..h {
        for x in 0..w {
            if seen[y as usize][x as usize] {
                continue;
            }
            regions += 1;
            let label = l.get(x as usize, y as usize);
            let mut q = VecDeque::from([(x, y)]);
            seen[y as usize][x as usize] = true;
            while let Some((cx, cy)) = q.pop_front() {
                for (dx, dy) in DIRS {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if at(l, nx, ny) == Some(label) && !seen[ny as usize][nx as usize] {
                        seen[ny as usize][nx as usize] = true;
                        q.push_back((nx, ny));
                    }
                }
            }
        }
    }
    regions
}

fn label_set(l: &Labeling) -> BTreeSet<u32> {
    l.labels().iter().copied().collect()
}

fn area(l: &Labeling, s: u32) -> usize {
    l.labels().iter().filter(|&&v| v == s).count()
}

fn intersection(sp: &Labeling, s: u32, gt: &Labeling, g: u32) -> usize {
    (0..sp.len())
        .filter(|&i| sp.labels()[i] == s && gt.labels()[i] == g)
        .count()
}

pub fn oracle_use(sp: &Labeling, gt: &Labeling) -> f64 {
    let n = sp.len() as f64;
    let mut total = 0.0;
    for g in label_set(gt) {
        for s in label_set(sp) {
            if intersection(sp, s, gt, g) > 0 {
                total += area(sp, s) as f64;
            }
        }
    }
    (total - n) / n
}

pub fn oracle_use_min(sp: &Labeling, gt: &Labeling) -> f64 {
    let mut total = 0usize;
    for g in label_set(gt) {
        for s in label_set(sp) {
            let inside = intersection(sp, s, gt, g);
            if inside > 0 {
                total += inside.min(area(sp, s) - inside);
            }
        }
    }
    total as f64 / sp.len() as f64
}

fn is_boundary(l: &Labeling, x: i64, y: i64) -> bool {
    let own = at(l, x, y);
    DIRS.iter()
        .any(|(dx, dy)| matches!(at(l, x + dx, y + dy), Some(v) if Some(v) != own))
}

pub fn oracle_br(sp: &Labeling, gt: &Labeling) -> f64 {
    let (w, h) = (gt.width() as i64, gt.height() as i64);
    let mut total = 0;
    let mut hit = 0;
    for y in 0..h {
        for x in 0..w {
            if !is_boundary(gt, x, y) {
                continue;
            }
            total += 1;
            let mut found = false;
            for yy in 0..h {
                for xx in 0..w {
                    if (xx - x).abs().max((yy - y).abs()) <= 2 && is_boundary(sp, xx, yy) {
                        found = true;
                    }
                }
            }
            if found {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn oracle_asa(sp: &Labeling, gt: &Labeling) -> f64 {
    let mut total = 0;
    for s in label_set(sp) {
        total += label_set(gt)
            .into_iter()
            .map(|g| intersection(sp, s, gt, g))
            .max()
            .unwrap_or(0);
    }
    total as f64 / sp.len() as f64
}

pub fn oracle_co(sp: &Labeling) -> f64 {
    let (w, h) = (sp.width() as i64, sp.height() as i64);
    let mut perim: BTreeMap<u32, usize> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let own = at(sp, x, y);
            for (dx, dy) in DIRS {
                if at(sp, x + dx, y + dy) != own {
                    *perim.entry(own.unwrap()).or_default() += 1;
                }
            }
        }
    }
    let mut sum = 0.0;
    for (s, p) in perim {
        let a = area(sp, s) as f64;
        let q = (4.0 * PI * a / (p * p) as f64).min(1.0);
        sum += a * q;
    }
    sum / sp.len() as f64
}

/// Li's cross-entropy objective for threshold `t` on positive values:
/// `−Σ_{v≤t} v·ln μ_b − Σ_{v>t} v·ln μ_a` (up to a constant).
pub fn li_objective(values: &[f64], t: f64) -> f64 {
    let below: Vec<f64> = values.iter().copied().filter(|&v| v <= t).collect();
    let above: Vec<f64> = values.iter().copied().filter(|&v| v > t).collect();
    if below.is_empty() || above.is_empty() {
        return f64::INFINITY;
    }
    let mb = below.iter().sum::<f64>() / below.len() as f64;
    let ma = above.iter().sum::<f64>() / above.len() as f64;
    -below.iter().sum::<f64>() * mb.ln() - above.iter().sum::<f64>() * ma.ln()
}

/// Best of 512 evenly spaced candidate thresholds strictly inside the
/// value range, after the same positive shift Li thresholding uses.
pub fn li_scan(values: &[f64]) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = -min + 1e-6 * (max - min);
    let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
    let (lo, hi) = (min + shift, max + shift);
    let mut best = (f64::INFINITY, lo);
    for j in 1..=512 {
        let t = lo + (hi - lo) * j as f64 / 513.0;
        let e = li_objective(&shifted, t);
        if e < best.0 {
            best = (e, t);
        }
    }
    best.1 - shift
}

/// Sample of two Gaussian modes; returns values and generating component.
pub fn bimodal(r: &mut impl Rng, n: usize, m0: f64, m1: f64, sd: f64) -> (Vec<f64>, Vec<bool>) {
    use rand_distr::{Distribution, Normal};
    let a = Normal::new(m0, sd).unwrap();
    let b = Normal::new(m1, sd).unwrap();
    let mut v = Vec::with_capacity(2 * n);
    let mut c = Vec::with_capacity(2 * n);
    for _ in 0..n {
        v.push(a.sample(r));
        c.push(false);
        v.push(b.sample(r));
        c.push(true);
    }
    (v, c)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Compares every metric with its brute-force oracle on `instances`
/// random labeling pairs and checks `DC = 2·JI/(1+JI)` on random masks.
/// Returns a description of each disagreement.
pub fn metric_mismatches(instances: usize, seed: u64) -> Vec<String> {
    use ddseg::foreground::BinaryMask;
    use ddseg::metrics::*;
    let mut r = rng(seed);
    let mut bad = Vec::new();
    let min_in_out = UseOptions {
        variant: UseVariant::MinInOut,
        min_overlap: 0.0,
    };
    for i in 0..instances {
        let (sp, gt) = random_pair(&mut r);
        let checks = [
            (
                "count_regions",
                count_regions(&sp) as f64,
                oracle_count_regions(&sp) as f64,
            ),
            ("use", undersegmentation_error(&sp, &gt).unwrap(), oracle_use(&sp, &gt)),
            (
                "use_min_in_out",
                undersegmentation_error_with(&sp, &gt, &min_in_out).unwrap(),
                oracle_use_min(&sp, &gt),
            ),
            ("br", boundary_recall(&sp, &gt).unwrap(), oracle_br(&sp, &gt)),
            (
                "asa",
                achievable_segmentation_accuracy(&sp, &gt).unwrap(),
                oracle_asa(&sp, &gt),
            ),
            ("co", compactness(&sp), oracle_co(&sp)),
        ];
        for (name, got, want) in checks {
            if got != want {
                bad.push(format!("instance {i}: {name} = {got}, oracle {want}"));
            }
        }
        let (w, h) = (sp.width(), sp.height());
        let pred = BinaryMask::from_fn(w, h, |_, _| r.random_bool(0.5));
        let gold = BinaryMask::from_fn(w, h, |_, _| r.random_bool(0.5));
        let m = binary_metrics(&pred, &gold).unwrap();
        if m.ji > 0.0 && (m.dc - 2.0 * m.ji / (1.0 + m.ji)).abs() > 1e-12 {
            bad.push(format!("instance {i}: DC {} vs JI {}", m.dc, m.ji));
        }
    }
    bad
}

/// Li thresholding against the 512-point scan on `samples` random bimodal
/// samples (side assignment), plus affine equivariance
/// `li(a·v + b) = a·li(v) + b` within 1e-6 of the range. Returns a
/// description of each failure.
pub fn li_mismatches(samples: usize, seed: u64) -> Vec<String> {
    use ddseg::foreground::li_threshold;
    let mut r = rng(seed);
    let mut bad = Vec::new();
    for i in 0..samples {
        let sd = r.random_range(0.05..0.5);
        let m0 = r.random_range(0.0..2.0);
        let m1 = m0 + sd * r.random_range(12.0..30.0);
        let n = r.random_range(50..500);
        let (v, _) = bimodal(&mut r, n, m0, m1, sd);
        let t = li_threshold(&v).unwrap();
        let s = li_scan(&v);
        let disagree = v.iter().filter(|&&x| (x > t) != (x > s)).count();
        if disagree > 0 {
            bad.push(format!(
                "sample {i}: li {t} and scan {s} split {disagree} values differently"
            ));
        }
        let (a, b) = (r.random_range(0.1..10.0), r.random_range(-5.0..5.0));
        let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let range = moved.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - moved.iter().copied().fold(f64::INFINITY, f64::min);
        let tm = li_threshold(&moved).unwrap();
        if (tm - (a * t + b)).abs() > 1e-6 * range {
            bad.push(format!("sample {i}: affine threshold {tm}, expected {}", a * t + b));
        }
    }
    bad
}
