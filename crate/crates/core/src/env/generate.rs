use super::{
    generate_blocks3d, generate_maze, Config, Obstacles, PlanningProblem, RobotKind, RobotModel,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Knobs for procedural problem generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemOptions {
    /// Maze side in cells (2d workspaces).
    pub maze_side: usize,
    /// Target obstacle volume fraction (3d workspace).
    pub density: f64,
    pub goal_radius: f64,
    pub w_len: f64,
    pub w_rot: f64,
}

impl ProblemOptions {
    /// Defaults per robot: mazes are coarser for robots with extent so that
    /// they can turn at corridor junctions.
    pub fn for_robot(kind: RobotKind) -> Self {
        let maze_side = match kind {
            RobotKind::Point2 => 15,
            _ => 9,
        };
        ProblemOptions {
            maze_side,
            density: 0.2,
            goal_radius: 0.05,
            w_len: 1.0,
            w_rot: 0.1,
        }
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Random maze (or cuboid field) with free start and goal configurations,
/// the start outside the goal ball.
pub fn generate_problem(kind: RobotKind, seed: u64, opts: &ProblemOptions) -> Result<PlanningProblem> {
    let robot = RobotModel::new(kind);
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let map_seed = derive_seed(seed, &[0, attempt]);
        let obstacles = match kind.workspace_dim() {
            2 => Obstacles::Grid(generate_maze(map_seed, opts.maze_side)?),
            _ => Obstacles::Cuboids(generate_blocks3d(map_seed, opts.density)?),
        };
        // a probe problem with placeholder endpoints; only its sampler is used
        let probe = PlanningProblem {
            robot: robot.clone(),
            obstacles,
            start: Config::new(vec![0.0; kind.dof()]),
            goal: Config::new(vec![0.0; kind.dof()]),
            goal_radius: opts.goal_radius,
            w_len: opts.w_len,
            w_rot: opts.w_rot,
            seed,
            fingerprint: 0,
        };
        let mut rng = rng_from_seed(derive_seed(seed, &[1, attempt]));
        let Ok(goal) = probe.sample_free(&mut rng) else {
            continue;
        };
        let mut start = None;
        for _ in 0..MAX_ATTEMPTS {
            match probe.sample_free(&mut rng) {
                Ok(s) if s.dist(&goal) > opts.goal_radius => {
                    start = Some(s);
                    break;
                }
                Ok(_) => {}
                Err(_) => break,
            }
        }
        let Some(start) = start else { continue };
        return PlanningProblem::new(
            robot,
            probe.obstacles,
            start,
            goal,
            opts.goal_radius,
            opts.w_len,
            opts.w_rot,
            seed,
        );
    }
    Err(Error::EnvironmentDegenerate(format!(
        "could not place start and goal for seed {seed}"
    )))
}
