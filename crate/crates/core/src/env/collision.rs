use super::{Cuboid, Obstacles, OccupancyGrid, Shape};

const EPS: f64 = 1e-12;

/// Static test of one primitive against the obstacles. Anything leaving the
/// unit square (cube) collides.
pub fn shape_collides(obstacles: &Obstacles, shape: &Shape) -> bool {
    match obstacles {
        Obstacles::Grid(g) => grid_collides(g, shape),
        Obstacles::Cuboids(set) => {
            if !shape_in_bounds(shape, 3) {
                return true;
            }
            set.boxes.iter().any(|b| cuboid_collides(b, shape))
        }
    }
}

fn in_unit(p: [f64; 3], dims: usize) -> bool {
    p[..dims].iter().all(|c| (0.0..=1.0).contains(c))
}

fn shape_in_bounds(shape: &Shape, dims: usize) -> bool {
    match *shape {
        Shape::Point(p) => in_unit(p, dims),
        Shape::Segment(p, q) => in_unit(p, dims) && in_unit(q, dims),
        Shape::Aabb { min, max } => in_unit(min, dims) && in_unit(max, dims),
    }
}

fn grid_collides(g: &OccupancyGrid, shape: &Shape) -> bool {
    if !shape_in_bounds(shape, 2) {
        return true;
    }
    match *shape {
        Shape::Point(p) => g.cell_of(p[0], p[1]).is_none_or(|(r, c)| g.get(r, c)),
        Shape::Segment(p, q) => {
            let n = g.side as f64;
            let span = |a: f64, b: f64| {
                let lo = ((a.min(b) * n).floor().max(0.0)) as usize;
                let hi = ((a.max(b) * n).floor() as usize).min(g.side - 1);
                lo..=hi
            };
            for row in span(p[1], q[1]) {
                for col in span(p[0], q[0]) {
                    if !g.get(row, col) {
                        continue;
                    }
                    let lo = [col as f64 / n, row as f64 / n];
                    let hi = [(col + 1) as f64 / n, (row + 1) as f64 / n];
                    if segment_hits_box(&p[..2], &q[..2], &lo, &hi) {
                        return true;
                    }
                }
            }
            false
        }
        Shape::Aabb { min, max } => {
            let n = g.side as f64;
            let lo_c = (min[0] * n).floor() as usize;
            let hi_c = ((max[0] * n).floor() as usize).min(g.side - 1);
            let lo_r = (min[1] * n).floor() as usize;
            let hi_r = ((max[1] * n).floor() as usize).min(g.side - 1);
            (lo_r..=hi_r).any(|r| (lo_c..=hi_c).any(|c| g.get(r, c)))
        }
    }
}

fn cuboid_collides(b: &Cuboid, shape: &Shape) -> bool {
    match *shape {
        Shape::Point(p) => b.contains(p),
        Shape::Segment(p, q) => segment_hits_box(&p, &q, &b.min, &b.max),
        Shape::Aabb { min, max } => (0..3).all(|k| min[k] <= b.max[k] && b.min[k] <= max[k]),
    }
}

/// Slab test of the closed segment `[p, q]` against the closed box `[lo, hi]`
/// in any dimension.
fn segment_hits_box(p: &[f64], q: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..p.len() {
        let d = q[k] - p[k];
        if d.abs() < EPS {
            if p[k] < lo[k] || p[k] > hi[k] {
                return false;
            }
            continue;
        }
        let (mut a, mut b) = ((lo[k] - p[k]) / d, (hi[k] - p[k]) / d);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return false;
        }
    }
    true
}
