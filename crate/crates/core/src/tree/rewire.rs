use super::{Postprocess, SearchTree, DEFAULT_ETA, DEFAULT_GAMMA};
use crate::env::PlanningProblem;

/// Shrinking neighbourhood radius `min(gamma (ln n / n)^(1/q), eta)`.
pub fn rewire_radius(n: usize, q: usize, gamma: f64, eta: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    (gamma * (n.ln() / n).powf(1.0 / q as f64)).min(eta)
}

/// RRT* choose-parent and rewire around a freshly inserted node. Returns the
/// number of collision checks spent.
pub fn rrt_star_rewire(
    tree: &mut SearchTree,
    problem: &PlanningProblem,
    new_index: usize,
    gamma: f64,
    eta: f64,
) -> u64 {
    let radius = rewire_radius(tree.len(), problem.dof(), gamma, eta);
    let s_new = tree.config(new_index).clone();
    let neighbors: Vec<usize> = tree
        .within(&s_new, radius)
        .into_iter()
        .filter(|&j| j != new_index)
        .collect();
    let mut checks = 0;

    // choose the cheapest collision-free parent
    let mut best_parent = tree.node(new_index).parent.expect("inserted node has a parent");
    let mut best_cost = tree.node(new_index).cost;
    for &j in &neighbors {
        if j == best_parent || tree.is_ancestor(new_index, j) {
            continue;
        }
        let c = tree.node(j).cost + problem.segment_cost(tree.config(j), &s_new);
        if c < best_cost {
            checks += 1;
            if problem.collision_free(tree.config(j), &s_new) {
                best_parent = j;
                best_cost = c;
            }
        }
    }
    if Some(best_parent) != tree.node(new_index).parent {
        tree.reparent(problem, new_index, best_parent);
    }

    // route neighbours through the new node when that is cheaper
    for &j in &neighbors {
        if Some(j) == tree.node(new_index).parent || tree.is_ancestor(j, new_index) {
            continue;
        }
        let c = tree.node(new_index).cost + problem.segment_cost(&s_new, tree.config(j));
        if c < tree.node(j).cost {
            checks += 1;
            if problem.collision_free(&s_new, tree.config(j)) {
                tree.reparent(problem, j, new_index);
            }
        }
    }
    checks
}

/// RRT* postprocessing operator.
#[derive(Debug, Clone)]
pub struct RrtStarRewire {
    pub gamma: f64,
    pub eta: f64,
}

impl Default for RrtStarRewire {
    fn default() -> Self {
        RrtStarRewire {
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_ETA,
        }
    }
}

impl Postprocess for RrtStarRewire {
    fn process(&mut self, tree: &mut SearchTree, problem: &PlanningProblem, new_index: usize) -> u64 {
        rrt_star_rewire(tree, problem, new_index, self.gamma, self.eta)
    }
}
