use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Expander, SearchTree, DEFAULT_ETA};
use crate::env::{Config, PlanningProblem};

/// Uniform draw from `B(center, radius) ∩ [0,1]^q` by rejection; falls back
/// to clamping after a bounded number of tries.
pub(crate) fn sample_ball<R: Rng + ?Sized>(center: &Config, radius: f64, rng: &mut R) -> Config {
    let q = center.dim();
    for _ in 0..64 {
        let dir: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let r = radius * rng.random::<f64>().powf(1.0 / q as f64);
        let s = Config::new(
            center
                .coords()
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + r * d / norm)
                .collect(),
        );
        if s.in_unit_cube() {
            return s;
        }
    }
    center.clone()
}

/// EST expansion: draw a tree node with probability proportional to
/// `weight`, then a uniform point in its `eta` ball.
pub fn est_expand<R: Rng + ?Sized>(
    tree: &SearchTree,
    weight: impl Fn(&SearchTree, usize) -> f64,
    eta: f64,
    rng: &mut R,
) -> (usize, Config) {
    let weights: Vec<f64> = (0..tree.len()).map(|i| weight(tree, i)).collect();
    let parent = WeightedIndex::new(&weights)
        .map(|w| w.sample(rng))
        .unwrap_or(0);
    (parent, sample_ball(tree.config(parent), eta, rng))
}

/// EST with the usual density-inverse weight `1 / (1 + #neighbours in eta)`.
#[derive(Debug, Clone)]
pub struct EstExpander {
    pub eta: f64,
    neighbors: Vec<usize>,
}

impl EstExpander {
    pub fn new(eta: f64) -> Self {
        EstExpander {
            eta,
            neighbors: vec![0],
        }
    }
}

impl Default for EstExpander {
    fn default() -> Self {
        Self::new(DEFAULT_ETA)
    }
}

impl Expander for EstExpander {
    fn expand(&mut self, tree: &SearchTree, _problem: &PlanningProblem, rng: &mut dyn RngCore) -> (usize, Config) {
        self.neighbors.resize(tree.len(), 0);
        let counts = &self.neighbors;
        est_expand(tree, |_, i| 1.0 / (1.0 + counts[i] as f64), self.eta, rng)
    }

    fn inserted(&mut self, tree: &SearchTree, _problem: &PlanningProblem, index: usize) {
        self.neighbors.resize(tree.len(), 0);
        let around = tree.within(tree.config(index), self.eta);
        for &j in &around {
            if j != index {
                self.neighbors[j] += 1;
                self.neighbors[index] += 1;
            }
        }
    }
}
