use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::env::{Config, PlanningProblem};
use crate::error::{invalid, Result};
use crate::guidance::PathExample;
use crate::tree::{extract_path, SearchTree};

pub const DEFAULT_BUFFER_CAPACITY: usize = 200;

/// Path from the root to `leaf` and its cost-to-go targets
/// `y_i = sum_{l >= i} c(s_l, s_{l+1})`.
pub fn targets_from_tree(tree: &SearchTree, leaf: usize, problem: &PlanningProblem) -> Result<(Vec<Config>, Vec<f64>)> {
    if leaf >= tree.len() {
        return Err(invalid(format!("leaf {leaf} is not a tree node")));
    }
    if !problem.in_goal(tree.config(leaf)) {
        return Err(invalid("leaf is not in the goal region"));
    }
    let (path, _) = extract_path(tree, leaf);
    let targets = suffix_costs(&path, problem);
    Ok((path, targets))
}

fn suffix_costs(path: &[Config], problem: &PlanningProblem) -> Vec<f64> {
    let mut y = vec![0.0; path.len()];
    for i in (0..path.len().saturating_sub(1)).rev() {
        y[i] = y[i + 1] + problem.segment_cost(&path[i], &path[i + 1]);
    }
    y
}

/// One successful planning experience.
#[derive(Debug, Clone)]
pub struct Experience {
    pub path: Vec<Config>,
    pub targets: Vec<f64>,
    pub problem: Arc<PlanningProblem>,
}

impl Experience {
    pub fn example(&self) -> PathExample<'_> {
        PathExample {
            path: &self.path,
            targets: &self.targets,
            problem: &self.problem,
        }
    }

    /// Segments collision free, last state in the goal, targets equal to
    /// recomputed suffix sums.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if self.path.len() < 2 || self.targets.len() != self.path.len() {
            return Err(invalid("experience needs two or more states and one target per state"));
        }
        if !p.in_goal(self.path.last().unwrap()) {
            return Err(invalid("experience path does not reach the goal"));
        }
        if let Some(w) = self.path.windows(2).find(|w| !p.collision_free(&w[0], &w[1])) {
            return Err(invalid(format!("experience segment {:?} -> {:?} is in collision", w[0].0, w[1].0)));
        }
        let y = suffix_costs(&self.path, p);
        for (a, b) in y.iter().zip(&self.targets) {
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(invalid("experience targets are not the path suffix costs"));
            }
        }
        Ok(())
    }
}

/// Fixed-size FIFO of validated experiences.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay buffer needs room for one entry");
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    /// Validates and appends, evicting the oldest entry when full.
    pub fn push(&mut self, exp: Experience) -> Result<()> {
        exp.validate()?;
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(exp);
        Ok(())
    }

    /// `n` entries drawn uniformly with replacement; empty if the buffer is.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
            .collect()
    }
}
