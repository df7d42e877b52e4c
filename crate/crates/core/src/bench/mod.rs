//! Benchmark harness: runs a (problem x planner) matrix with independent
//! seeded streams, normalises metrics against a baseline planner and emits
//! CSV reports and SVG renderings.

mod bfs;
mod dijkstra;
mod svg;

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Config, PlanningProblem};
use crate::error::{invalid, Error, Result};
use crate::guidance::{GuidanceParams, NetGuide};
use crate::msil::{plan_guided_until, GuidedSettings, UcbSettings, DEFAULT_K, EVAL_EPS};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tree::{
    tsa_plan_until, EstExpander, PlanResult, RrtExpander, RrtStarRewire, SearchTree, TreeNode, DEFAULT_ETA,
    DEFAULT_GAMMA, DEFAULT_GOAL_BIAS,
};

pub use bfs::bfs_ablation_plan;
pub use dijkstra::{DijkstraGuide, VOXELS_3D};
pub use svg::{render_tree_svg, RenderedSvg, PROJECTION_WARNING};

/// Environment variable capping the number of benchmark workers.
pub const THREADS_ENV: &str = "NEXT_MP_THREADS";

pub const CSV_HEADER: &str = "problem_id,planner,success,collision_checks,samples,path_cost,wall_ms,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerKind {
    RrtStar,
    Est,
    NextKs,
    NextGp,
    BfsAblation,
    Dijkstra,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::RrtStar,
        PlannerKind::Est,
        PlannerKind::NextKs,
        PlannerKind::NextGp,
        PlannerKind::BfsAblation,
        PlannerKind::Dijkstra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::RrtStar => "rrt-star",
            PlannerKind::Est => "est",
            PlannerKind::NextKs => "next-ks",
            PlannerKind::NextGp => "next-gp",
            PlannerKind::BfsAblation => "bfs-ablation",
            PlannerKind::Dijkstra => "dijkstra",
        }
    }

    /// Stable id mixed into per-cell seeds.
    pub fn code(self) -> u64 {
        self as u64
    }

    pub fn needs_network(self) -> bool {
        matches!(self, PlannerKind::NextKs | PlannerKind::NextGp | PlannerKind::BfsAblation)
    }
}

impl FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown planner {s:?}")))
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub budget: usize,
    pub k: usize,
    pub eta: f64,
    pub goal_bias: f64,
    /// RRT share of the guided planners' expansions.
    pub eps: f64,
    pub bandwidth: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Record wall-clock milliseconds; off keeps reports byte-reproducible.
    pub timing: bool,
    pub wall_cap: Option<Duration>,
    /// Worker cap; falls back to `NEXT_MP_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let ucb = UcbSettings::ks();
        BenchConfig {
            budget: crate::msil::DEFAULT_BUDGET,
            k: DEFAULT_K,
            eta: DEFAULT_ETA,
            goal_bias: DEFAULT_GOAL_BIAS,
            eps: EVAL_EPS,
            bandwidth: ucb.bandwidth,
            lambda: ucb.lambda,
            seed: 0,
            timing: false,
            wall_cap: None,
            threads: None,
        }
    }
}

impl BenchConfig {
    pub fn guided(&self, ucb: UcbSettings) -> GuidedSettings {
        GuidedSettings {
            k: self.k,
            eta: self.eta,
            goal_bias: self.goal_bias,
            eps: self.eps,
            budget: self.budget,
            ucb: UcbSettings {
                bandwidth: self.bandwidth,
                lambda: self.lambda,
                ..ucb
            },
            rewire: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.eta > 0.0) || !(0.0..=1.0).contains(&self.eps) {
            return Err(invalid("need k >= 1, eta > 0 and eps in [0, 1]"));
        }
        if !(self.bandwidth > 0.0) || !(self.lambda >= 0.0) {
            return Err(invalid("need a positive kernel bandwidth and non-negative lambda"));
        }
        Ok(())
    }
}

/// Runs one planner on one problem with the given seed.
pub fn run_planner(
    kind: PlannerKind,
    problem: &PlanningProblem,
    params: Option<&GuidanceParams<f32>>,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<PlanResult> {
    let mut rng = rng_from_seed(seed);
    let deadline = cfg.wall_cap.map(|d| Instant::now() + d);
    let rewire = || RrtStarRewire {
        gamma: DEFAULT_GAMMA,
        eta: cfg.eta,
    };
    let net = || {
        params.ok_or_else(|| invalid(format!("planner {kind} needs a trained checkpoint"))).and_then(|p| {
            if p.hyper().q != problem.dof() {
                return Err(invalid(format!(
                    "checkpoint is for {} degrees of freedom, problem has {}",
                    p.hyper().q,
                    problem.dof()
                )));
            }
            Ok(NetGuide::new(p, problem))
        })
    };
    Ok(match kind {
        PlannerKind::RrtStar => {
            let mut exp = RrtExpander {
                eta: cfg.eta,
                goal_bias: cfg.goal_bias,
            };
            tsa_plan_until(problem, &mut exp, Some(&mut rewire()), cfg.budget, deadline, &mut rng)
        }
        PlannerKind::Est => tsa_plan_until(problem, &mut EstExpander::new(cfg.eta), None, cfg.budget, deadline, &mut rng),
        PlannerKind::NextKs => plan_guided_until(problem, &net()?, &cfg.guided(UcbSettings::ks()), deadline, &mut rng),
        PlannerKind::NextGp => plan_guided_until(problem, &net()?, &cfg.guided(UcbSettings::gp()), deadline, &mut rng),
        PlannerKind::Dijkstra => {
            let guide = DijkstraGuide::new(problem, cfg.eta);
            plan_guided_until(problem, &guide, &cfg.guided(UcbSettings::ks()), deadline, &mut rng)
        }
        PlannerKind::BfsAblation => bfs_ablation_plan(problem, &net()?, cfg.k, cfg.eta, cfg.budget, Some(&mut rewire()), &mut rng),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub problem_id: u64,
    pub planner: PlannerKind,
    pub success: bool,
    pub collision_checks: u64,
    pub samples: u64,
    pub path_cost: Option<f64>,
    pub wall_ms: u64,
    pub seed: u64,
    /// Why the run was recorded as a failure without finishing.
    pub error: Option<String>,
}

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{:016x},{},{},{},{},{},{},{}",
            self.problem_id,
            self.planner,
            self.success as u8,
            self.collision_checks,
            self.samples,
            self.path_cost.map(|c| c.to_string()).unwrap_or_default(),
            self.wall_ms,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    /// Problem-major, planners in the requested order.
    pub rows: Vec<BenchRow>,
}

/// Raw per-planner aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSummary {
    pub planner: PlannerKind,
    pub runs: usize,
    pub success_rate: f64,
    pub mean_checks: f64,
    /// Over successful runs only.
    pub mean_cost: Option<f64>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Planners in order of first appearance.
    pub fn planners(&self) -> Vec<PlannerKind> {
        let mut out: Vec<PlannerKind> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.planner) {
                out.push(r.planner);
            }
        }
        out
    }

    pub fn rows_for(&self, planner: PlannerKind) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(move |r| r.planner == planner)
    }

    pub fn summary(&self, planner: PlannerKind) -> Option<PlannerSummary> {
        let rows: Vec<&BenchRow> = self.rows_for(planner).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let costs: Vec<f64> = rows.iter().filter_map(|r| r.path_cost).collect();
        Some(PlannerSummary {
            planner,
            runs: rows.len(),
            success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
            mean_checks: rows.iter().map(|r| r.collision_checks as f64).sum::<f64>() / n,
            mean_cost: (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64),
        })
    }

    pub fn summaries(&self) -> Vec<PlannerSummary> {
        self.planners().into_iter().filter_map(|p| self.summary(p)).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }
}

/// Metrics of one planner relative to the baseline, averaged over problems
/// where both succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMetrics {
    pub planner: PlannerKind,
    pub checks: Option<f64>,
    pub cost: Option<f64>,
    /// Problems that entered the averages.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedReport {
    pub baseline: PlannerKind,
    pub planners: Vec<NormalizedMetrics>,
}

impl NormalizedReport {
    pub fn get(&self, planner: PlannerKind) -> Option<&NormalizedMetrics> {
        self.planners.iter().find(|m| m.planner == planner)
    }
}

/// Ratio of two non-negative metrics; `0 / 0` counts as parity and `x / 0`
/// is dropped.
fn ratio(value: f64, base: f64) -> Option<f64> {
    if base > 0.0 {
        Some(value / base)
    } else if value == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

/// Per-problem metrics divided by the baseline's on the same problem,
/// skipping problems where either failed, then averaged.
pub fn normalize(report: &BenchReport, baseline: PlannerKind) -> Result<NormalizedReport> {
    let base: Vec<&BenchRow> = report.rows_for(baseline).collect();
    if base.is_empty() {
        return Err(invalid(format!("baseline planner {baseline} is not in the report")));
    }
    let mut planners = Vec::new();
    for planner in report.planners() {
        let mut checks = Vec::new();
        let mut costs = Vec::new();
        let mut pairs = 0;
        for row in report.rows_for(planner) {
            let Some(b) = base.iter().find(|b| b.problem_id == row.problem_id) else {
                continue;
            };
            if !(row.success && b.success) {
                continue;
            }
            pairs += 1;
            checks.extend(ratio(row.collision_checks as f64, b.collision_checks as f64));
            if let (Some(c), Some(bc)) = (row.path_cost, b.path_cost) {
                costs.extend(ratio(c, bc));
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        planners.push(NormalizedMetrics {
            planner,
            checks: mean(&checks),
            cost: mean(&costs),
            pairs,
        });
    }
    Ok(NormalizedReport { baseline, planners })
}

fn thread_cap(cfg: &BenchConfig) -> Result<Option<usize>> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t.max(1)));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|t| Some(t.max(1)))
            .map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "planner panicked".into()
    }
}

/// Runs every planner on every problem. Each cell has its own stream seeded
/// from `(cfg.seed, problem id, planner id)`; a cell that panics or errors
/// becomes a failed row with a diagnostic.
pub fn run_benchmark(
    problems: &[PlanningProblem],
    planners: &[PlannerKind],
    params: Option<&GuidanceParams<f32>>,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if problems.is_empty() || planners.is_empty() {
        return Err(invalid("a benchmark needs at least one problem and one planner"));
    }
    cfg.validate()?;
    if params.is_none() {
        if let Some(p) = planners.iter().find(|p| p.needs_network()) {
            return Err(invalid(format!("planner {p} needs a trained checkpoint")));
        }
    }
    let cells: Vec<(&PlanningProblem, PlannerKind)> = problems
        .iter()
        .flat_map(|p| planners.iter().map(move |&k| (p, k)))
        .collect();
    let run_cell = |&(problem, kind): &(&PlanningProblem, PlannerKind)| {
        let seed = derive_seed(cfg.seed, &[problem.id(), kind.code()]);
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run_planner(kind, problem, params, cfg, seed)));
        let wall_ms = if cfg.timing { t0.elapsed().as_millis() as u64 } else { 0 };
        let mut row = BenchRow {
            problem_id: problem.id(),
            planner: kind,
            success: false,
            collision_checks: 0,
            samples: 0,
            path_cost: None,
            wall_ms,
            seed,
            error: None,
        };
        match outcome {
            Ok(Ok(r)) => {
                row.success = r.success;
                row.collision_checks = r.collision_checks;
                row.samples = r.samples_used;
                row.path_cost = r.path_cost;
            }
            Ok(Err(e)) => row.error = Some(e.to_string()),
            Err(payload) => row.error = Some(panic_message(payload.as_ref())),
        }
        row
    };
    let rows = match thread_cap(cfg)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };
    Ok(BenchReport { rows })
}

/// JSON form of a search tree, as written by `plan` and read by `render`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<TreeNodeJson>,
    #[serde(default)]
    pub goal_leaf: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNodeJson {
    pub config: Vec<f64>,
    pub parent: Option<usize>,
    pub cost: f64,
}

impl TreeFile {
    pub fn from_tree(tree: &SearchTree) -> Self {
        TreeFile {
            nodes: tree
                .nodes()
                .iter()
                .map(|n| TreeNodeJson {
                    config: n.config.coords().to_vec(),
                    parent: n.parent,
                    cost: n.cost,
                })
                .collect(),
            goal_leaf: tree.goal_leaf,
        }
    }

    pub fn into_tree(self) -> Result<SearchTree> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| TreeNode {
                config: Config::new(n.config),
                parent: n.parent,
                cost: n.cost,
            })
            .collect();
        SearchTree::from_nodes(nodes, self.goal_leaf).map_err(Error::InvalidArgument)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
