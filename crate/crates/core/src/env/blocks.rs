use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Axis-aligned box inside the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Cuboid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn min_edge(&self) -> f64 {
        (0..3)
            .map(|k| self.max[k] - self.min[k])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CuboidSet {
    pub boxes: Vec<Cuboid>,
}

impl CuboidSet {
    pub fn min_edge(&self) -> Option<f64> {
        self.boxes.iter().map(Cuboid::min_edge).reduce(f64::min)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }
}

const EDGE_RANGE: (f64, f64) = (0.05, 0.2);
const VOXELS: usize = 96;

/// Union volume estimated on a fixed voxel lattice (cell-centre rule).
pub fn occupied_volume(set: &CuboidSet) -> f64 {
    let mut occ = vec![false; VOXELS * VOXELS * VOXELS];
    for b in &set.boxes {
        mark(&mut occ, b);
    }
    occ.iter().filter(|&&o| o).count() as f64 / occ.len() as f64
}

fn voxel_span(lo: f64, hi: f64) -> std::ops::Range<usize> {
    let n = VOXELS as f64;
    // voxel i has centre (i + 0.5) / n
    let a = (lo * n - 0.5).ceil().max(0.0) as usize;
    let b = ((hi * n - 0.5).floor() + 1.0).clamp(0.0, n) as usize;
    a..b.max(a)
}

fn mark(occ: &mut [bool], b: &Cuboid) -> usize {
    let mut added = 0;
    for i in voxel_span(b.min[0], b.max[0]) {
        for j in voxel_span(b.min[1], b.max[1]) {
            for k in voxel_span(b.min[2], b.max[2]) {
                let cell = &mut occ[(i * VOXELS + j) * VOXELS + k];
                if !*cell {
                    *cell = true;
                    added += 1;
                }
            }
        }
    }
    added
}

/// Random axis-aligned boxes, drawn i.i.d. until the union covers `density`
/// of the unit cube.
pub fn generate_blocks3d(seed: u64, density: f64) -> Result<CuboidSet> {
    if !(0.0..0.5).contains(&density) {
        return Err(invalid("density must lie in [0, 0.5)"));
    }
    let mut rng = rng_from_seed(seed);
    let mut set = CuboidSet::default();
    let mut occ = vec![false; VOXELS * VOXELS * VOXELS];
    let target = (density * occ.len() as f64).round() as usize;
    let mut filled = 0;
    while filled < target {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for k in 0..3 {
            let edge = rng.random_range(EDGE_RANGE.0..EDGE_RANGE.1);
            let lo = rng.random_range(0.0..1.0 - edge);
            min[k] = lo;
            max[k] = lo + edge;
        }
        let b = Cuboid { min, max };
        filled += mark(&mut occ, &b);
        set.boxes.push(b);
    }
    Ok(set)
}
