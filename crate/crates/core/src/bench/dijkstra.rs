use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::env::{Config, Obstacles, PlanningProblem};
use crate::guidance::Guide;

/// Voxel side used for 3d workspaces.
pub const VOXELS_3D: usize = 20;

/// Heuristic guide: exact cost-to-go on a workspace occupancy grid, and a
/// step of length `eta` toward the cheapest neighbouring cell.
#[derive(Debug, Clone)]
pub struct DijkstraGuide {
    dim: usize,
    side: usize,
    free: Vec<bool>,
    cost: Vec<f64>,
    goal_cell: usize,
    goal_ws: Vec<f64>,
    /// Stand-in for cells that cannot reach the goal.
    unreachable: f64,
    eta: f64,
    sigma: f64,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DijkstraGuide {
    pub fn new(problem: &PlanningProblem, eta: f64) -> Self {
        let (dim, side, free) = match &problem.obstacles {
            Obstacles::Grid(g) => (2, g.side, g.cells.iter().map(|&c| c == 0).collect::<Vec<_>>()),
            Obstacles::Cuboids(set) => {
                let n = VOXELS_3D;
                let mut free = Vec::with_capacity(n * n * n);
                for z in 0..n {
                    for y in 0..n {
                        for x in 0..n {
                            let c = |i: usize| (i as f64 + 0.5) / n as f64;
                            free.push(!set.contains([c(x), c(y), c(z)]));
                        }
                    }
                }
                (3, n, free)
            }
        };
        let goal_ws = problem.goal.coords()[..dim].to_vec();
        let mut guide = DijkstraGuide {
            dim,
            side,
            free,
            cost: Vec::new(),
            goal_cell: 0,
            goal_ws,
            unreachable: 0.0,
            eta,
            sigma: 0.5 * eta,
        };
        guide.goal_cell = guide.cell_index(&guide.goal_ws.clone());
        guide.run();
        guide
    }

    fn cell_index(&self, ws: &[f64]) -> usize {
        let n = self.side;
        ws.iter().rev().fold(0, |acc, &v| {
            let i = ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
            acc * n + i
        })
    }

    fn coords_of(&self, mut idx: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let c = idx % self.side;
                idx /= self.side;
                c
            })
            .collect()
    }

    fn center(&self, idx: usize) -> Vec<f64> {
        self.coords_of(idx)
            .into_iter()
            .map(|c| (c as f64 + 0.5) / self.side as f64)
            .collect()
    }

    /// Free neighbours (including diagonals whose bounding box is free) and
    /// the Euclidean length of each move.
    fn neighbours(&self, idx: usize) -> Vec<(usize, f64)> {
        let here = self.coords_of(idx);
        let n = self.side as i64;
        let h = 1.0 / self.side as f64;
        let mut out = Vec::new();
        for code in 0..3usize.pow(self.dim as u32) {
            let mut off = Vec::with_capacity(self.dim);
            let mut c = code;
            for _ in 0..self.dim {
                off.push((c % 3) as i64 - 1);
                c /= 3;
            }
            if off.iter().all(|&o| o == 0) {
                continue;
            }
            let target: Vec<i64> = here.iter().zip(&off).map(|(&a, &o)| a as i64 + o).collect();
            if target.iter().any(|&t| t < 0 || t >= n) {
                continue;
            }
            // every cell in the box spanned by the move must be free
            let moving: Vec<usize> = (0..self.dim).filter(|&k| off[k] != 0).collect();
            let corners_free = (1..(1usize << moving.len())).all(|mask| {
                let mut cell: Vec<i64> = here.iter().map(|&a| a as i64).collect();
                for (b, &k) in moving.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        cell[k] += off[k];
                    }
                }
                self.free[self.flat(&cell)]
            });
            if corners_free {
                out.push((self.flat(&target), h * (moving.len() as f64).sqrt()));
            }
        }
        out
    }

    fn flat(&self, cell: &[i64]) -> usize {
        cell.iter().rev().fold(0, |acc, &c| acc * self.side + c as usize)
    }

    fn run(&mut self) {
        let mut cost = vec![f64::INFINITY; self.free.len()];
        let mut heap = BinaryHeap::new();
        cost[self.goal_cell] = 0.0;
        heap.push(Entry(0.0, self.goal_cell));
        while let Some(Entry(c, i)) = heap.pop() {
            if c > cost[i] {
                continue;
            }
            for (j, w) in self.neighbours(i) {
                if c + w < cost[j] {
                    cost[j] = c + w;
                    heap.push(Entry(c + w, j));
                }
            }
        }
        let worst = cost.iter().copied().filter(|c| c.is_finite()).fold(0.0, f64::max);
        self.unreachable = worst + self.dim as f64;
        self.cost = cost;
    }

    /// Grid cost-to-go of the cell holding `ws`, plus the distance to that
    /// cell's centre.
    pub fn cost_to_go(&self, ws: &[f64]) -> f64 {
        let idx = self.cell_index(ws);
        let c = self.cost[idx];
        if !c.is_finite() {
            return self.unreachable;
        }
        let target = if idx == self.goal_cell { self.goal_ws.clone() } else { self.center(idx) };
        c + dist(ws, &target)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Guide for DijkstraGuide {
    fn evaluate(&self, s: &Config) -> (f64, Config) {
        let ws = &s.coords()[..self.dim];
        let idx = self.cell_index(ws);
        let target = if idx == self.goal_cell {
            Some(self.goal_ws.clone())
        } else {
            self.neighbours(idx)
                .into_iter()
                .filter(|&(j, _)| self.cost[j].is_finite())
                .min_by(|a, b| (self.cost[a.0] + a.1).total_cmp(&(self.cost[b.0] + b.1)))
                .map(|(j, _)| self.center(j))
        };
        let mut mean = s.clone();
        if let Some(t) = target {
            let d = dist(ws, &t);
            let scale = if d > self.eta { self.eta / d } else { 1.0 };
            for k in 0..self.dim {
                mean.0[k] += scale * (t[k] - ws[k]);
            }
        }
        (self.cost_to_go(ws), mean)
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }
}
