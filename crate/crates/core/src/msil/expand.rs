use rand::{Rng, RngCore};

use crate::env::{Config, PlanningProblem};
use crate::guidance::{sample_projected, Guide};
use crate::tree::{Expander, RrtExpander, SearchTree};
use crate::ucb::{PointStats, UcbHistory};

fn better(score: f64, best: f64) -> bool {
    // NaN never wins
    score > best || (best.is_nan() && !score.is_nan())
}

/// Guided progressive expansion with per-node score caches.
///
/// Node selection maximises `phi` over the whole tree, the selected node's
/// reward `-V(s_parent)` is appended to the history, and the new state is
/// the best of `k` policy draws under the updated `phi`.
pub struct NextExpander<'g> {
    guide: &'g dyn Guide,
    hist: UcbHistory,
    pub k: usize,
    pub eta: f64,
    stats: Vec<PointStats>,
    evals: Vec<Option<(f64, Config)>>,
}

impl<'g> NextExpander<'g> {
    pub fn new(guide: &'g dyn Guide, hist: UcbHistory, k: usize, eta: f64) -> Self {
        assert!(k >= 1, "need at least one candidate");
        NextExpander {
            guide,
            hist,
            k,
            eta,
            stats: Vec::new(),
            evals: Vec::new(),
        }
    }

    pub fn history(&self) -> &UcbHistory {
        &self.hist
    }

    pub fn into_history(self) -> UcbHistory {
        self.hist
    }

    fn eval(&mut self, tree: &SearchTree, i: usize) -> (f64, Config) {
        if self.evals.len() < tree.len() {
            self.evals.resize(tree.len(), None);
        }
        self.evals[i]
            .get_or_insert_with(|| self.guide.evaluate(tree.config(i)))
            .clone()
    }

    /// `argmax_{s in V} phi(s)`, lowest index on ties.
    pub fn select(&mut self, tree: &SearchTree) -> usize {
        while self.stats.len() < tree.len() {
            self.stats.push(PointStats::default());
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, st) in self.stats.iter_mut().enumerate().take(tree.len()) {
            let s = tree.config(i);
            self.hist.refresh(st, s);
            let phi = self.hist.score_with(st, s);
            if i == 0 || better(phi, best.1) {
                best = (i, phi);
            }
        }
        best.0
    }

    pub fn step<R: Rng + ?Sized>(&mut self, tree: &SearchTree, rng: &mut R) -> (usize, Config) {
        let parent = self.select(tree);
        let (value, mean) = self.eval(tree, parent);
        let s_parent = tree.config(parent);
        self.hist
            .update(s_parent.clone(), -value)
            .expect("noisy GP Gram matrix stays positive definite");
        let candidates = sample_projected(&mean, s_parent, self.guide.sigma(), self.k, self.eta, rng);
        let mut best = (0, f64::NEG_INFINITY);
        for (j, c) in candidates.iter().enumerate() {
            let phi = self.hist.score(c);
            if j == 0 || better(phi, best.1) {
                best = (j, phi);
            }
        }
        let s_new = candidates.into_iter().nth(best.0).unwrap();
        (parent, s_new)
    }
}

impl Expander for NextExpander<'_> {
    fn expand(&mut self, tree: &SearchTree, _problem: &PlanningProblem, rng: &mut dyn RngCore) -> (usize, Config) {
        self.step(tree, rng)
    }
}

/// One guided expansion against `hist` without cached scores.
pub fn next_expand<R: Rng + ?Sized>(
    tree: &SearchTree,
    guide: &dyn Guide,
    hist: &mut UcbHistory,
    k: usize,
    eta: f64,
    rng: &mut R,
) -> (usize, Config) {
    let empty = UcbHistory::new(hist.kind(), hist.kernel(), hist.lambda());
    let mut ex = NextExpander::new(guide, std::mem::replace(hist, empty), k, eta);
    let out = ex.step(tree, rng);
    *hist = ex.into_history();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandSource {
    Rrt,
    Next,
}

/// `RRT::Expand` with probability `eps`, guided expansion otherwise.
///
/// The uniform draw is skipped when `eps` is 0 or 1, so `eps = 1` consumes
/// exactly the random stream of plain RRT.
pub struct MixedExpander<'g> {
    pub eps: f64,
    pub rrt: RrtExpander,
    pub next: NextExpander<'g>,
    pub rrt_count: u64,
    pub next_count: u64,
}

impl<'g> MixedExpander<'g> {
    pub fn new(eps: f64, rrt: RrtExpander, next: NextExpander<'g>) -> Self {
        assert!((0.0..=1.0).contains(&eps), "mixture weight must lie in [0, 1]");
        MixedExpander {
            eps,
            rrt,
            next,
            rrt_count: 0,
            next_count: 0,
        }
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> ExpandSource {
        let use_rrt = if self.eps >= 1.0 {
            true
        } else if self.eps <= 0.0 {
            false
        } else {
            rng.random::<f64>() < self.eps
        };
        if use_rrt {
            ExpandSource::Rrt
        } else {
            ExpandSource::Next
        }
    }
}

impl Expander for MixedExpander<'_> {
    fn expand(&mut self, tree: &SearchTree, problem: &PlanningProblem, rng: &mut dyn RngCore) -> (usize, Config) {
        match self.pick(rng) {
            ExpandSource::Rrt => {
                self.rrt_count += 1;
                self.rrt.expand(tree, problem, rng)
            }
            ExpandSource::Next => {
                self.next_count += 1;
                self.next.step(tree, rng)
            }
        }
    }
}
