//! Tree-based sampling: the generic grow-until-goal loop and the classical
//! expansion and postprocessing operators.

mod est;
mod rewire;
mod rrt;

use std::time::Instant;

use rand::RngCore;

use crate::env::{Config, PlanningProblem};

pub use est::{est_expand, EstExpander};
pub use rewire::{rewire_radius, rrt_star_rewire, RrtStarRewire};
pub use rrt::{rrt_expand, RrtExpander};

/// Default steering radius in normalised units.
pub const DEFAULT_ETA: f64 = 0.15;
pub const DEFAULT_GOAL_BIAS: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub config: Config,
    pub parent: Option<usize>,
    pub cost: f64,
}

/// Search tree rooted at the start configuration. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    pub goal_leaf: Option<usize>,
}

impl SearchTree {
    pub fn new(root: Config) -> Self {
        SearchTree {
            nodes: vec![TreeNode {
                config: root,
                parent: None,
                cost: 0.0,
            }],
            children: vec![Vec::new()],
            goal_leaf: None,
        }
    }

    /// Rebuilds a tree from a node list: node 0 is the root and every other
    /// node must reach it through its parents.
    pub fn from_nodes(nodes: Vec<TreeNode>, goal_leaf: Option<usize>) -> Result<Self, String> {
        if nodes.is_empty() || nodes[0].parent.is_some() {
            return Err("a tree needs a root without parent at index 0".into());
        }
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate().skip(1) {
            match node.parent {
                Some(p) if p < n && p != i => children[p].push(i),
                _ => return Err(format!("node {i} has no valid parent")),
            }
        }
        // every node reached from the root exactly once means no cycles
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            seen[i] = true;
            stack.extend_from_slice(&children[i]);
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(format!("node {i} does not reach the root"));
        }
        if goal_leaf.is_some_and(|g| g >= n) {
            return Err("goal leaf is not a tree node".into());
        }
        Ok(SearchTree {
            nodes,
            children,
            goal_leaf,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn config(&self, i: usize) -> &Config {
        &self.nodes[i].config
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn add(&mut self, config: Config, parent: usize, cost: f64) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode {
            config,
            parent: Some(parent),
            cost,
        });
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        idx
    }

    /// Nearest node in the Euclidean configuration metric, lowest index on
    /// ties.
    pub fn nearest(&self, s: &Config) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.config.dist_sq(s);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Indices of nodes within `radius` of `s`, ascending.
    pub fn within(&self, s: &Config, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].config.dist_sq(s) <= r2)
            .collect()
    }

    pub fn is_ancestor(&self, ancestor: usize, mut node: usize) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Moves `node` under `new_parent` and refreshes the costs of its whole
    /// subtree from the edge costs.
    pub fn reparent(&mut self, problem: &PlanningProblem, node: usize, new_parent: usize) {
        debug_assert!(!self.is_ancestor(node, new_parent), "reparenting would create a cycle");
        if let Some(old) = self.nodes[node].parent {
            self.children[old].retain(|&c| c != node);
        }
        self.nodes[node].parent = Some(new_parent);
        self.children[new_parent].push(node);
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            let p = self.nodes[i].parent.expect("non-root");
            let cost = self.nodes[p].cost + problem.segment_cost(&self.nodes[p].config, &self.nodes[i].config);
            self.nodes[i].cost = cost;
            stack.extend_from_slice(&self.children[i]);
        }
    }

    /// Checks acyclicity, root reachability and cost consistency. Used by
    /// tests and debug assertions.
    pub fn check_invariants(&self, problem: &PlanningProblem, tol: f64) -> Result<(), String> {
        let root = &self.nodes[0];
        if root.parent.is_some() || root.cost != 0.0 {
            return Err("root must have no parent and zero cost".into());
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            let p = n.parent.ok_or_else(|| format!("node {i} has no parent"))?;
            let expected = self.nodes[p].cost + problem.segment_cost(&self.nodes[p].config, &n.config);
            if (expected - n.cost).abs() > tol * (1.0 + expected.abs()) {
                return Err(format!("node {i}: cost {} but parent chain gives {expected}", n.cost));
            }
            // walk to the root within len steps
            let mut cur = i;
            let mut steps = 0;
            while let Some(q) = self.nodes[cur].parent {
                cur = q;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(format!("cycle through node {i}"));
                }
            }
            if cur != 0 {
                return Err(format!("node {i} does not reach the root"));
            }
        }
        Ok(())
    }
}

/// Root-to-leaf configurations and the leaf's cost from the root.
pub fn extract_path(tree: &SearchTree, leaf: usize) -> (Vec<Config>, f64) {
    let mut path = Vec::new();
    let mut cur = Some(leaf);
    while let Some(i) = cur {
        path.push(tree.config(i).clone());
        cur = tree.node(i).parent;
    }
    path.reverse();
    (path, tree.node(leaf).cost)
}

/// The expansion step of the tree-growing loop: propose a tree node and a
/// new configuration to connect to it.
pub trait Expander {
    fn expand(&mut self, tree: &SearchTree, problem: &PlanningProblem, rng: &mut dyn RngCore) -> (usize, Config);

    /// Called after a proposal passed the collision check and was inserted.
    fn inserted(&mut self, _tree: &SearchTree, _problem: &PlanningProblem, _index: usize) {}
}

/// Optional refinement after each insertion. Returns the number of
/// collision checks it spent.
pub trait Postprocess {
    fn process(&mut self, tree: &mut SearchTree, problem: &PlanningProblem, new_index: usize) -> u64;
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub tree: SearchTree,
    pub success: bool,
    pub path: Option<Vec<Config>>,
    pub path_cost: Option<f64>,
    pub collision_checks: u64,
    pub samples_used: u64,
}

impl PlanResult {
    /// Independent re-validation of a reported success.
    pub fn validate(&self, problem: &PlanningProblem, tol: f64) -> Result<(), String> {
        if !self.success {
            return Ok(());
        }
        let path = self.path.as_ref().ok_or("success without a path")?;
        let first = path.first().ok_or("empty path")?;
        if first != &problem.start {
            return Err("path does not start at the start configuration".into());
        }
        if !problem.in_goal(path.last().unwrap()) {
            return Err("path does not end in the goal region".into());
        }
        let mut cost = 0.0;
        for w in path.windows(2) {
            if !problem.collision_free(&w[0], &w[1]) {
                return Err("path segment in collision".into());
            }
            cost += problem.segment_cost(&w[0], &w[1]);
        }
        let reported = self.path_cost.ok_or("success without a cost")?;
        if (reported - cost).abs() > tol * (1.0 + cost) {
            return Err(format!("reported cost {reported} but segments sum to {cost}"));
        }
        Ok(())
    }
}

/// Grows a tree from the start until a node lands in the goal region or the
/// budget of expansion iterations runs out.
pub fn tsa_plan(
    problem: &PlanningProblem,
    expander: &mut dyn Expander,
    postprocess: Option<&mut dyn Postprocess>,
    budget: usize,
    rng: &mut dyn RngCore,
) -> PlanResult {
    tsa_plan_until(problem, expander, postprocess, budget, None, rng)
}

/// [`tsa_plan`] with an optional wall-clock deadline.
pub fn tsa_plan_until(
    problem: &PlanningProblem,
    expander: &mut dyn Expander,
    mut postprocess: Option<&mut dyn Postprocess>,
    budget: usize,
    deadline: Option<Instant>,
    rng: &mut dyn RngCore,
) -> PlanResult {
    let mut tree = SearchTree::new(problem.start.clone());
    let mut checks = 0u64;
    let mut samples = 0u64;
    let mut goal_leaf = problem.in_goal(&problem.start).then_some(0);

    if goal_leaf.is_none() {
        for _ in 0..budget {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            samples += 1;
            let (parent, s_new) = expander.expand(&tree, problem, rng);
            checks += 1;
            if !problem.collision_free(tree.config(parent), &s_new) {
                continue;
            }
            let cost = tree.node(parent).cost + problem.segment_cost(tree.config(parent), &s_new);
            let reached = problem.in_goal(&s_new);
            let idx = tree.add(s_new, parent, cost);
            expander.inserted(&tree, problem, idx);
            if let Some(post) = postprocess.as_deref_mut() {
                checks += post.process(&mut tree, problem, idx);
            }
            if reached {
                goal_leaf = Some(idx);
                break;
            }
        }
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

#[cfg(test)]
pub(crate) mod test_util {
    use crate::env::{Config, Obstacles, OccupancyGrid, PlanningProblem, RobotKind, RobotModel};

    pub fn open_problem(start: Vec<f64>, goal: Vec<f64>) -> PlanningProblem {
        PlanningProblem::new(
            RobotModel::new(RobotKind::Point2),
            Obstacles::Grid(OccupancyGrid::empty(10)),
            Config::new(start),
            Config::new(goal),
            0.05,
            1.0,
            0.1,
            0,
        )
        .unwrap()
    }
}
