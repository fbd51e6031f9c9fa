//! SLIC-like clustering of pixel embeddings into connected superpixels.
//!
//! Seeds start on a uniform grid and move to the flattest pixel of their
//! 5×5 neighborhood. Each iteration assigns pixels to the nearest center
//! (plain Euclidean distance in embedding space, restricted to clusters
//! whose spatial centroid is nearby), recomputes centers, and then
//! enforces 4-connectivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::components::{connected_components, neighbors4, Topology};
use crate::decoder::EmbeddingMap;
use crate::error::{Error, Result};
use crate::imaging::mean_gradient_magnitude;
use crate::labeling::Labeling;
use crate::parallel::Exec;

/// Random stream for connectivity repair, separate from every decoder
/// stream derived from the same seed.
pub fn clustering_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Grid dimensions `(n_w, n_h)` for `requested` clusters:
/// `n_w = ⌊√(requested·w/h)⌋`, `n_h = ⌊requested/n_w⌋`.
pub fn grid_seed_count(requested: usize, width: usize, height: usize) -> Result<(usize, usize)> {
    if requested == 0 || width == 0 || height == 0 {
        return Err(Error::TooFewClusters {
            requested,
            n_w: 0,
            n_h: 0,
        });
    }
    let n_w = (requested as f64 * width as f64 / height as f64).sqrt().floor() as usize;
    let n_h = requested.checked_div(n_w).unwrap_or(0);
    if n_w == 0 || n_h == 0 {
        return Err(Error::TooFewClusters { requested, n_w, n_h });
    }
    Ok((n_w, n_h))
}

/// Cell centers of an `n_w × n_h` grid, row by row.
pub fn grid_seeds(n_w: usize, n_h: usize, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut seeds = Vec::with_capacity(n_w * n_h);
    for j in 0..n_h {
        let y = (((j as f64 + 0.5) * height as f64 / n_h as f64) as usize).min(height - 1);
        for i in 0..n_w {
            let x = (((i as f64 + 0.5) * width as f64 / n_w as f64) as usize).min(width - 1);
            seeds.push((x, y));
        }
    }
    seeds
}

/// Moves each seed to the pixel of lowest mean channel gradient within
/// its 5×5 window (clipped at the border). Ties go to the first pixel in
/// row-major order, so a flat window resolves to its top-left corner.
pub fn perturb_seeds(seeds: &[(usize, usize)], embedding: &EmbeddingMap) -> Result<Vec<(usize, usize)>> {
    let grad = mean_gradient_magnitude(embedding.features())?;
    let (w, h) = (embedding.width(), embedding.height());
    seeds
        .iter()
        .map(|&(sx, sy)| {
            if sx >= w || sy >= h {
                return Err(Error::InvalidParameter(format!("seed ({sx}, {sy}) outside {w}x{h}")));
            }
            let mut best = (f64::INFINITY, sx, sy);
            for y in sy.saturating_sub(2)..=(sy + 2).min(h - 1) {
                for x in sx.saturating_sub(2)..=(sx + 2).min(w - 1) {
                    let g = grad.get(x, y);
                    if g < best.0 {
                        best = (g, x, y);
                    }
                }
            }
            Ok((best.1, best.2))
        })
        .collect()
}

/// Reassigns every non-largest 4-connected fragment of a label wholesale to
/// a uniformly chosen adjacent label, repeating until each label is a
/// single component. Leaves connected labelings untouched.
pub fn enforce_connectivity<R: Rng + ?Sized>(labeling: &Labeling, rng: &mut R) -> Labeling {
    let (w, h) = (labeling.width(), labeling.height());
    let mut labels = labeling.labels().to_vec();
    loop {
        let comps = connected_components(&labels, w, h, Topology::Planar, |_| true);
        let n_comp = comps.count();
        let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
        let mut comp_label = vec![0u32; n_comp];
        for (i, &c) in comps.ids.iter().enumerate() {
            pixels[c as usize].push(i);
            comp_label[c as usize] = labels[i];
        }
        // Largest component per label; earlier (row-major) wins ties.
        let max_label = comp_label.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut main: Vec<Option<usize>> = vec![None; max_label];
        for c in 0..n_comp {
            let slot = &mut main[comp_label[c] as usize];
            match *slot {
                Some(m) if comps.sizes[m] >= comps.sizes[c] => {}
                _ => *slot = Some(c),
            }
        }
        let fragments: Vec<usize> = (0..n_comp)
            .filter(|&c| main[comp_label[c] as usize] != Some(c))
            .collect();
        if fragments.is_empty() {
            break;
        }
        for c in fragments {
            let own = labels[pixels[c][0]];
            let mut adjacent: Vec<u32> = pixels[c]
                .iter()
                .flat_map(|&i| neighbors4(i, w, h, Topology::Planar))
                .map(|j| labels[j])
                .filter(|&l| l != own)
                .collect();
            adjacent.sort_unstable();
            adjacent.dedup();
            if adjacent.is_empty() {
                continue;
            }
            let target = adjacent[rng.random_range(0..adjacent.len())];
            for &i in &pixels[c] {
                labels[i] = target;
            }
        }
    }
    Labeling::new(w, h, labels).expect("dimensions unchanged")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub max_iterations: usize,
    /// Stop once fewer than this fraction of pixels change label.
    pub min_change_fraction: f64,
    /// Candidate clusters must have their centroid within this many grid
    /// steps (Chebyshev); `None` searches all clusters.
    pub search_radius: Option<f64>,
    pub exec: Exec,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            max_iterations: 100,
            min_change_fraction: 0.001,
            search_radius: Some(2.0),
            exec: Exec::default(),
        }
    }
}

/// Cluster centers in embedding space and their spatial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub dims: usize,
    /// `count × dims`, row per cluster.
    pub centers: Vec<f64>,
    pub centroids: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
}

impl ClusterState {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dims..(k + 1) * self.dims]
    }

    fn from_seeds(seeds: &[(usize, usize)], features: &[f64], dims: usize, width: usize) -> Self {
        let mut centers = Vec::with_capacity(seeds.len() * dims);
        for &(x, y) in seeds {
            let i = y * width + x;
            centers.extend_from_slice(&features[i * dims..(i + 1) * dims]);
        }
        ClusterState {
            dims,
            centers,
            centroids: seeds.iter().map(|&(x, y)| (x as f64, y as f64)).collect(),
            counts: vec![1; seeds.len()],
        }
    }

    /// Recomputes means from `labels`; empty clusters keep their old values
    /// and get count 0.
    fn update(&mut self, labels: &[u32], features: &[f64], width: usize) {
        let d = self.dims;
        let k = self.len();
        let mut sums = vec![0.0; k * d];
        let mut pos = vec![(0.0, 0.0); k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let l = l as usize;
            counts[l] += 1;
            pos[l].0 += (i % width) as f64;
            pos[l].1 += (i / width) as f64;
            for (s, f) in sums[l * d..(l + 1) * d].iter_mut().zip(&features[i * d..(i + 1) * d]) {
                *s += f;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let n = counts[c] as f64;
            for (dst, s) in self.centers[c * d..(c + 1) * d]
                .iter_mut()
                .zip(&sums[c * d..(c + 1) * d])
            {
                *dst = s / n;
            }
            self.centroids[c] = (pos[c].0 / n, pos[c].1 / n);
        }
        self.counts = counts;
    }
}

/// Spatial hash of active cluster centroids with cell side `cell`.
struct CentroidGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl CentroidGrid {
    fn new(state: &ClusterState, cell: f64, width: usize, height: usize) -> Self {
        let cols = ((width as f64 / cell).ceil() as usize).max(1);
        let rows = ((height as f64 / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (k, &(cx, cy)) in state.centroids.iter().enumerate() {
            if state.counts[k] == 0 {
                continue;
            }
            let bx = ((cx / cell) as usize).min(cols - 1);
            let by = ((cy / cell) as usize).min(rows - 1);
            buckets[by * cols + bx].push(k as u32);
        }
        CentroidGrid {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    fn candidates(&self, x: usize, y: usize, out: &mut Vec<u32>) {
        out.clear();
        let bx = ((x as f64 / self.cell) as usize).min(self.cols - 1);
        let by = ((y as f64 / self.cell) as usize).min(self.rows - 1);
        for gy in by.saturating_sub(1)..=(by + 1).min(self.rows - 1) {
            for gx in bx.saturating_sub(1)..=(bx + 1).min(self.cols - 1) {
                out.extend_from_slice(&self.buckets[gy * self.cols + gx]);
            }
        }
        out.sort_unstable();
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns every pixel to its nearest candidate center. Ties in embedding
/// distance fall back to spatial distance, then to the lower index.
fn assign(
    state: &ClusterState,
    features: &[f64],
    width: usize,
    height: usize,
    window: Option<f64>,
    exec: Exec,
    labels: &mut [u32],
) {
    let d = state.dims;
    let grid = window.map(|r| CentroidGrid::new(state, r.max(1.0), width, height));
    let active: Vec<u32> = (0..state.len() as u32)
        .filter(|&k| state.counts[k as usize] > 0)
        .collect();
    let rows_per_chunk = (4096 / width.max(1)).max(1);
    exec.for_each_chunk_mut(labels, rows_per_chunk * width, |chunk_idx, chunk| {
        let mut cands = Vec::new();
        let offset = chunk_idx * rows_per_chunk * width;
        for (j, slot) in chunk.iter_mut().enumerate() {
            let i = offset + j;
            let (x, y) = (i % width, i / width);
            let f = &features[i * d..(i + 1) * d];
            let mut best: Option<(f64, f64, u32)> = None;
            if let Some(g) = &grid {
                g.candidates(x, y, &mut cands);
                for &k in &cands {
                    consider(state, f, x, y, k, Some(g.cell), &mut best);
                }
            }
            if best.is_none() {
                for &k in &active {
                    consider(state, f, x, y, k, None, &mut best);
                }
            }
            *slot = best.map_or(*slot, |b| b.2);
        }
    });
}

fn consider(
    state: &ClusterState,
    f: &[f64],
    x: usize,
    y: usize,
    k: u32,
    limit: Option<f64>,
    best: &mut Option<(f64, f64, u32)>,
) {
    let (cx, cy) = state.centroids[k as usize];
    let (dx, dy) = (cx - x as f64, cy - y as f64);
    if limit.is_some_and(|r| dx.abs().max(dy.abs()) > r) {
        return;
    }
    let key = (sq_dist(f, state.center(k as usize)), dx * dx + dy * dy, k);
    if best.is_none_or(|b| key < b) {
        *best = Some(key);
    }
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub labeling: Labeling,
    pub seeds: usize,
    pub iterations: usize,
    /// Labels changed in the last iteration.
    pub last_changed: usize,
    pub state: ClusterState,
}

/// Clusters `embedding` into at most `requested` connected superpixels
/// with default settings.
pub fn cluster<R: Rng + ?Sized>(embedding: &EmbeddingMap, requested: usize, rng: &mut R) -> Result<Labeling> {
    Ok(cluster_with(embedding, requested, &ClusterConfig::default(), rng)?.labeling)
}

pub fn cluster_with<R: Rng + ?Sized>(
    embedding: &EmbeddingMap,
    requested: usize,
    cfg: &ClusterConfig,
    rng: &mut R,
) -> Result<ClusterOutcome> {
    let (w, h) = (embedding.width(), embedding.height());
    let n = w * h;
    if requested > n {
        return Err(Error::TooManyClusters { requested, pixels: n });
    }
    let (n_w, n_h) = grid_seed_count(requested, w, h)?;
    let seeds = perturb_seeds(&grid_seeds(n_w, n_h, w, h), embedding)?;
    let d = embedding.dims();
    let features = embedding.pixel_major();
    let mut state = ClusterState::from_seeds(&seeds, &features, d, w);
    let step = (n as f64 / seeds.len() as f64).sqrt();
    let window = cfg.search_radius.map(|r| r * step);

    let mut labels = vec![0u32; n];
    let mut previous: Option<Vec<u32>> = None;
    let mut iterations = 0;
    let mut last_changed = n;
    while iterations < cfg.max_iterations {
        iterations += 1;
        assign(&state, &features, w, h, window, cfg.exec, &mut labels);
        state.update(&labels, &features, w);
        let connected = enforce_connectivity(&Labeling::new(w, h, labels)?, rng);
        labels = connected.labels().to_vec();
        last_changed = match &previous {
            Some(p) => p.iter().zip(&labels).filter(|(a, b)| a != b).count(),
            None => n,
        };
        previous = Some(labels.clone());
        if (last_changed as f64) < cfg.min_change_fraction * n as f64 {
            break;
        }
    }
    let labeling = Labeling::new(w, h, labels)?.densified();
    Ok(ClusterOutcome {
        labeling,
        seeds: seeds.len(),
        iterations,
        last_changed,
        state,
    })
}
