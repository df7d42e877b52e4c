use crate::env::{Obstacles, PlanningProblem};

/// Obstacle map resized to `d x d`, as channel-major rows
/// (`[channel][row * d + col]`, row along y).
///
/// Grids are resized by taking the maximum over every source cell that
/// overlaps a target cell, so thin walls survive downsampling. For 3d
/// obstacles the first channel is the top-down occupancy of each column and
/// the second the fraction of the column height that is occupied.
pub fn map_features(problem: &PlanningProblem, d: usize) -> Vec<Vec<f64>> {
    match &problem.obstacles {
        Obstacles::Grid(g) => {
            let s = g.side;
            let mut out = vec![0.0; d * d];
            for i in 0..d {
                let (r0, r1) = (i * s / d, ((i + 1) * s).div_ceil(d));
                for j in 0..d {
                    let (c0, c1) = (j * s / d, ((j + 1) * s).div_ceil(d));
                    let hit = (r0..r1).any(|r| (c0..c1).any(|c| g.get(r, c)));
                    out[i * d + j] = if hit { 1.0 } else { 0.0 };
                }
            }
            vec![out]
        }
        Obstacles::Cuboids(set) => {
            let nz = 2 * d;
            let mut top = vec![0.0; d * d];
            let mut frac = vec![0.0; d * d];
            let cell = 1.0 / d as f64;
            for i in 0..d {
                let (y0, y1) = (i as f64 * cell, (i + 1) as f64 * cell);
                for j in 0..d {
                    let (x0, x1) = (j as f64 * cell, (j + 1) as f64 * cell);
                    let column: Vec<_> = set
                        .boxes
                        .iter()
                        .filter(|b| b.min[0] < x1 && b.max[0] > x0 && b.min[1] < y1 && b.max[1] > y0)
                        .collect();
                    if column.is_empty() {
                        continue;
                    }
                    top[i * d + j] = 1.0;
                    let filled = (0..nz)
                        .filter(|&k| {
                            let z = (k as f64 + 0.5) / nz as f64;
                            column.iter().any(|b| b.min[2] <= z && z <= b.max[2])
                        })
                        .count();
                    frac[i * d + j] = filled as f64 / nz as f64;
                }
            }
            vec![top, frac]
        }
    }
}
