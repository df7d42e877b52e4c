//! Guided progressive expansion and the self-improving training loop.
//!
//! Training plans every problem with an `eps`-mixture of RRT and guided
//! expansion (plus RRT* rewiring), keeps successful paths in a FIFO replay
//! buffer and fits the guidance network to them between problems.

mod buffer;
mod expand;
mod optim;
mod schedule;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;

use crate::env::PlanningProblem;
use crate::error::{invalid, Error, Result};
use crate::guidance::{loss_and_grad, save_checkpoint, Guide, GuidanceParams, NetGuide, PathExample};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tree::{tsa_plan_until, PlanResult, RrtExpander, RrtStarRewire, DEFAULT_ETA, DEFAULT_GAMMA, DEFAULT_GOAL_BIAS};
use crate::ucb::{RbfKernel, UcbHistory, UcbKind, DEFAULT_BANDWIDTH, DEFAULT_GP_NOISE, DEFAULT_LAMBDA};

pub use buffer::{targets_from_tree, Experience, ReplayBuffer, DEFAULT_BUFFER_CAPACITY};
pub use expand::{next_expand, ExpandSource, MixedExpander, NextExpander};
pub use optim::{Optimizer, OptimizerKind};
pub use schedule::{anneal, EpsSchedule};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_BUDGET: usize = 500;
pub const CHECKPOINT_EVERY: usize = 200;
/// Mixture weight used after training.
pub const EVAL_EPS: f64 = 0.1;
/// Global gradient-norm cap. A single bad batch can push the min-pool
/// recurrence past unit gain; the spike then swamps Adam's second moment.
pub const DEFAULT_CLIP_NORM: f64 = 10.0;

/// Confidence score used by guided expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbSettings {
    pub kind: UcbKind,
    pub bandwidth: f64,
    pub lambda: f64,
}

impl UcbSettings {
    pub fn ks() -> Self {
        UcbSettings {
            kind: UcbKind::KernelSmoothing,
            bandwidth: DEFAULT_BANDWIDTH,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn gp() -> Self {
        UcbSettings {
            kind: UcbKind::GaussianProcess { noise: DEFAULT_GP_NOISE },
            ..Self::ks()
        }
    }

    pub fn history(&self) -> UcbHistory {
        UcbHistory::new(self.kind, RbfKernel::new(self.bandwidth), self.lambda)
    }
}

/// Everything needed to run the guided planner on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedSettings {
    pub k: usize,
    pub eta: f64,
    pub goal_bias: f64,
    pub eps: f64,
    pub budget: usize,
    pub ucb: UcbSettings,
    /// RRT* rewiring after each insertion.
    pub rewire: bool,
}

impl Default for GuidedSettings {
    fn default() -> Self {
        GuidedSettings {
            k: DEFAULT_K,
            eta: DEFAULT_ETA,
            goal_bias: DEFAULT_GOAL_BIAS,
            eps: EVAL_EPS,
            budget: DEFAULT_BUDGET,
            ucb: UcbSettings::ks(),
            rewire: true,
        }
    }
}

/// The tree-growing loop with mixed RRT / guided expansion.
pub fn plan_guided(problem: &PlanningProblem, guide: &dyn Guide, s: &GuidedSettings, rng: &mut dyn RngCore) -> PlanResult {
    plan_guided_until(problem, guide, s, None, rng)
}

/// [`plan_guided`] with an optional wall-clock deadline.
pub fn plan_guided_until(
    problem: &PlanningProblem,
    guide: &dyn Guide,
    s: &GuidedSettings,
    deadline: Option<Instant>,
    rng: &mut dyn RngCore,
) -> PlanResult {
    let next = NextExpander::new(guide, s.ucb.history(), s.k, s.eta);
    let rrt = RrtExpander {
        eta: s.eta,
        goal_bias: s.goal_bias,
    };
    let mut mixed = MixedExpander::new(s.eps, rrt, next);
    let mut rewire = RrtStarRewire {
        gamma: DEFAULT_GAMMA,
        eta: s.eta,
    };
    let post: Option<&mut dyn crate::tree::Postprocess> = if s.rewire { Some(&mut rewire) } else { None };
    tsa_plan_until(problem, &mut mixed, post, s.budget, deadline, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsilConfig {
    pub epochs: usize,
    /// Gradient steps per parameter update; 0 leaves the network untouched.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_reg: f64,
    pub schedule: EpsSchedule,
    pub optimizer: OptimizerKind,
    pub clip_norm: Option<f64>,
    pub buffer_capacity: usize,
    /// Problems between parameter updates; 1 updates after every problem.
    pub update_every: usize,
    pub planner: GuidedSettings,
    pub seed: u64,
}

impl MsilConfig {
    pub fn new(epochs: usize) -> Self {
        MsilConfig {
            epochs,
            steps_per_epoch: 10,
            batch_size: 4,
            learning_rate: 1e-3,
            lambda_reg: 1e-4,
            schedule: EpsSchedule::piecewise(epochs),
            optimizer: OptimizerKind::adam(),
            clip_norm: Some(DEFAULT_CLIP_NORM),
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            update_every: 1,
            planner: GuidedSettings::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.planner.budget == 0 || self.planner.k == 0 {
            return Err(invalid("sample budget and candidate count must be positive"));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.update_every == 0 {
            return Err(invalid("batch size, buffer capacity and update interval must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda_reg >= 0.0) {
            return Err(invalid("learning rate must be positive and regularisation non-negative"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid("gradient clip norm must be positive"));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub problem_id: u64,
    pub success: bool,
    pub samples: u64,
    pub collision_checks: u64,
    pub path_cost: Option<f64>,
    /// Mean batch loss over this epoch's gradient steps.
    pub loss: Option<f64>,
    pub epsilon: f64,
}

pub const LOG_HEADER: &str = "epoch,problem_id,success,samples,collision_checks,path_cost,loss,epsilon";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{:016x},{},{},{},{},{},{}",
            self.epoch,
            self.problem_id,
            self.success as u8,
            self.samples,
            self.collision_checks,
            opt(self.path_cost),
            opt(self.loss),
            self.epsilon
        )
    }
}

pub struct TrainOutput {
    pub params: GuidanceParams<f32>,
    pub log: Vec<EpochRecord>,
    pub buffer: ReplayBuffer,
}

/// Runs `cfg.epochs` rounds of plan / store / fit over `problems` (used in
/// order, cycling). With `out_dir`, writes `train_log.csv`, a checkpoint
/// every [`CHECKPOINT_EVERY`] epochs and `final.ckpt`.
pub fn train(
    cfg: &MsilConfig,
    problems: &[PlanningProblem],
    mut params: GuidanceParams<f32>,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(invalid("training needs at least one problem"));
    }
    if problems.iter().any(|p| p.dof() != params.hyper().q) {
        return Err(invalid("problem dimension does not match the network"));
    }
    let problems: Vec<Arc<PlanningProblem>> = problems.iter().cloned().map(Arc::new).collect();
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = BufWriter::new(File::create(dir.join("train_log.csv"))?);
            writeln!(f, "{LOG_HEADER}")?;
            Some(f)
        }
        None => None,
    };

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    opt.clip_norm = cfg.clip_norm;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut updates = 0;
    for epoch in 0..cfg.epochs {
        let problem = &problems[epoch % problems.len()];
        let eps = cfg.schedule.at(epoch, updates);
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[0, epoch as u64]));
        let result = {
            let guide = NetGuide::new(&params, problem);
            let settings = GuidedSettings {
                eps,
                ..cfg.planner.clone()
            };
            plan_guided(problem, &guide, &settings, &mut rng)
        };
        if let Some(leaf) = result.tree.goal_leaf {
            let (path, targets) = targets_from_tree(&result.tree, leaf, problem)?;
            // a start inside the goal gives a single state; nothing to fit
            if path.len() >= 2 {
                buffer.push(Experience {
                    path,
                    targets,
                    problem: problem.clone(),
                })?;
            }
        }

        let mut loss = None;
        if (epoch + 1) % cfg.update_every == 0 {
            let mut batch_rng = rng_from_seed(derive_seed(cfg.seed, &[1, epoch as u64]));
            let mut total = 0.0;
            let mut steps = 0;
            for _ in 0..cfg.steps_per_epoch {
                let picked = buffer.sample(cfg.batch_size, &mut batch_rng);
                if picked.is_empty() {
                    break;
                }
                let batch: Vec<PathExample> = picked.iter().map(|e| e.example()).collect();
                let (l, grads) = loss_and_grad(&params, &batch, cfg.lambda_reg)
                    .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
                opt.step(&mut params, &grads);
                if !params.all_finite() {
                    return Err(Error::Numeric(format!("epoch {epoch}: parameters diverged (last loss {l})")));
                }
                total += l;
                steps += 1;
            }
            if steps > 0 {
                loss = Some(total / steps as f64);
            }
            updates += 1;
        }

        let rec = EpochRecord {
            epoch,
            problem_id: problem.id(),
            success: result.success,
            samples: result.samples_used,
            collision_checks: result.collision_checks,
            path_cost: result.path_cost,
            loss,
            epsilon: eps,
        };
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{}", rec.csv_row())?;
        }
        log.push(rec);
        if let Some(dir) = out_dir {
            if (epoch + 1) % CHECKPOINT_EVERY == 0 {
                save_checkpoint(&params, dir.join(format!("epoch_{:06}.ckpt", epoch + 1)))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        log_file.as_mut().unwrap().flush()?;
        save_checkpoint(&params, dir.join("final.ckpt"))?;
    }
    Ok(TrainOutput { params, log, buffer })
}

#[cfg(test)]
mod tests;
