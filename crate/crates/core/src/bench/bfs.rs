use std::collections::VecDeque;

use rand::RngCore;

use crate::env::PlanningProblem;
use crate::guidance::{sample_projected, Guide};
use crate::tree::{extract_path, PlanResult, Postprocess, SearchTree};

/// Queue-driven ablation of guided expansion: pop a state, draw `k` policy
/// samples around it (one collision check each), insert the free ones and
/// push them, then the popped state, back onto the queue.
pub fn bfs_ablation_plan(
    problem: &PlanningProblem,
    guide: &dyn Guide,
    k: usize,
    eta: f64,
    budget: usize,
    mut postprocess: Option<&mut dyn Postprocess>,
    rng: &mut dyn RngCore,
) -> PlanResult {
    let mut tree = SearchTree::new(problem.start.clone());
    let mut checks = 0u64;
    let mut samples = 0u64;
    let mut goal_leaf = problem.in_goal(&problem.start).then_some(0);
    let mut queue = VecDeque::from([0usize]);

    'search: while goal_leaf.is_none() && (samples as usize) < budget {
        let Some(s) = queue.pop_front() else { break };
        let here = tree.config(s).clone();
        let (_, mean) = guide.evaluate(&here);
        for cand in sample_projected(&mean, &here, guide.sigma(), k.max(1), eta, rng) {
            if samples as usize == budget {
                break 'search;
            }
            samples += 1;
            checks += 1;
            if !problem.collision_free(&here, &cand) {
                continue;
            }
            let cost = tree.node(s).cost + problem.segment_cost(&here, &cand);
            let reached = problem.in_goal(&cand);
            let idx = tree.add(cand, s, cost);
            if let Some(post) = postprocess.as_deref_mut() {
                checks += post.process(&mut tree, problem, idx);
            }
            if reached {
                goal_leaf = Some(idx);
                break 'search;
            }
            queue.push_back(idx);
        }
        queue.push_back(s);
    }

    tree.goal_leaf = goal_leaf;
    let (path, path_cost) = match goal_leaf {
        Some(leaf) => {
            let (p, c) = extract_path(&tree, leaf);
            (Some(p), Some(c))
        }
        None => (None, None),
    };
    PlanResult {
        tree,
        success: goal_leaf.is_some(),
        path,
        path_cost,
        collision_checks: checks,
        samples_used: samples,
    }
}
