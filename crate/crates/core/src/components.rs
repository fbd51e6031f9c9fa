//! 4-connected component labeling on pixel grids.

/// Grid topology for neighbor lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Topology {
    #[default]
    Planar,
    /// Opposite edges are adjacent.
    Torus,
}

/// Marker for pixels excluded from labeling.
pub const UNLABELED: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component index per pixel, or [`UNLABELED`].
    pub ids: Vec<u32>,
    /// Pixel count per component.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// The 4-neighbors of pixel `i` (up, left, right, down order).
#[inline]
pub fn neighbors4(i: usize, width: usize, height: usize, topology: Topology) -> impl Iterator<Item = usize> {
    let (x, y) = (i % width, i / width);
    let torus = topology == Topology::Torus;
    let up = if y > 0 {
        Some(i - width)
    } else if torus && height > 1 {
        Some((height - 1) * width + x)
    } else {
        None
    };
    let left = if x > 0 {
        Some(i - 1)
    } else if torus && width > 1 {
        Some(y * width + width - 1)
    } else {
        None
    };
    let right = if x + 1 < width {
        Some(i + 1)
    } else if torus && width > 1 {
        Some(y * width)
    } else {
        None
    };
    let down = if y + 1 < height {
        Some(i + width)
    } else if torus && height > 1 {
        Some(x)
    } else {
        None
    };
    [up, left, right, down].into_iter().flatten()
}

/// Labels maximal 4-connected sets of equal `values` among pixels where
/// `include` holds. Components are numbered in row-major order of their
/// first pixel.
pub fn connected_components<T: PartialEq>(
    values: &[T],
    width: usize,
    height: usize,
    topology: Topology,
    include: impl Fn(&T) -> bool,
) -> Components {
    assert_eq!(values.len(), width * height);
    let mut ids = vec![UNLABELED; values.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if ids[start] != UNLABELED || !include(&values[start]) {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        ids[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            for j in neighbors4(i, width, height, topology) {
                if ids[j] == UNLABELED && values[j] == values[i] {
                    ids[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    Components { ids, sizes }
}

/// Number of 4-connected regions of `true` pixels.
pub fn count_mask_regions(mask: &[bool], width: usize, height: usize, topology: Topology) -> usize {
    connected_components(mask, width, height, topology, |&m| m).count()
}
