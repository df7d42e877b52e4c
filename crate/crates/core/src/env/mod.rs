//! Planning problems: workspaces, robots, collision checking and costs.
//!
//! All configurations are stored normalised to the unit cube. Workspace
//! coordinates map directly onto the unit square (or cube); joint angles are
//! mapped affinely from their allowed range so a single distance metric and
//! kernel bandwidth work across robots.

mod blocks;
mod collision;
mod generate;
mod io;
mod maze;
mod robot;

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{invalid, Error, Result};

pub use blocks::{generate_blocks3d, occupied_volume, Cuboid, CuboidSet};
pub use collision::shape_collides;
pub use generate::{generate_problem, ProblemOptions};
pub use io::ProblemFile;
pub use maze::{generate_maze, OccupancyGrid};
pub use robot::{robot_segments, Shape};

/// Draws allowed before [`PlanningProblem::sample_free`] gives up.
pub const SAMPLE_FREE_BUDGET: usize = 10_000;

/// A robot configuration with every coordinate normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Config(pub Vec<f64>);

impl Config {
    pub fn new(coords: Vec<f64>) -> Self {
        Config(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dist(&self, other: &Config) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &Config) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Linear interpolation `self + t (other - self)`.
    pub fn lerp(&self, other: &Config, t: f64) -> Config {
        Config(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }

    pub fn in_unit_cube(&self) -> bool {
        self.0.iter().all(|c| (0.0..=1.0).contains(c))
    }

    /// Point of the ball `B(self, radius)` closest to `target`.
    pub fn steer(&self, target: &Config, radius: f64) -> Config {
        let d = self.dist(target);
        if d <= radius {
            target.clone()
        } else {
            self.lerp(target, radius / d)
        }
    }
}

impl std::ops::Index<usize> for Config {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RobotKind {
    Point2,
    Rigid3,
    Snake5,
    Spacecraft7,
}

impl RobotKind {
    pub const ALL: [RobotKind; 4] = [
        RobotKind::Point2,
        RobotKind::Rigid3,
        RobotKind::Snake5,
        RobotKind::Spacecraft7,
    ];

    /// Configuration-space dimension.
    pub fn dof(self) -> usize {
        match self {
            RobotKind::Point2 => 2,
            RobotKind::Rigid3 => 3,
            RobotKind::Snake5 => 5,
            RobotKind::Spacecraft7 => 7,
        }
    }

    pub fn workspace_dim(self) -> usize {
        match self {
            RobotKind::Spacecraft7 => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RobotKind::Point2 => "point2",
            RobotKind::Rigid3 => "rigid3",
            RobotKind::Snake5 => "snake5",
            RobotKind::Spacecraft7 => "spacecraft7",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            RobotKind::Point2 => 0,
            RobotKind::Rigid3 => 1,
            RobotKind::Snake5 => 2,
            RobotKind::Spacecraft7 => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl std::str::FromStr for RobotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown robot kind {s:?}")))
    }
}

impl std::fmt::Display for RobotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Robot geometry. Lengths are in units of the workspace width.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub kind: RobotKind,
    /// Stick length (Rigid3), per-link length (Snake5) or per-link arm
    /// length (Spacecraft7). Unused for Point2.
    pub link_length: f64,
    /// Edge of the cubic spacecraft body.
    pub body_size: f64,
    /// Radian range of each angle coordinate, in coordinate order.
    pub joint_ranges: Vec<(f64, f64)>,
}

impl RobotModel {
    pub fn new(kind: RobotKind) -> Self {
        let quarter = PI / 4.0;
        let (link_length, body_size, joint_ranges) = match kind {
            RobotKind::Point2 => (0.0, 0.0, vec![]),
            RobotKind::Rigid3 => (0.1, 0.0, vec![(-PI, PI)]),
            RobotKind::Snake5 => (
                0.05,
                0.0,
                vec![(-PI, PI), (-quarter, quarter), (-quarter, quarter)],
            ),
            RobotKind::Spacecraft7 => (0.05, 0.08, vec![(0.0, PI / 2.0); 4]),
        };
        RobotModel {
            kind,
            link_length,
            body_size,
            joint_ranges,
        }
    }

    pub fn dof(&self) -> usize {
        self.kind.dof()
    }

    pub fn workspace_dim(&self) -> usize {
        self.kind.workspace_dim()
    }

    /// Radian value of angle coordinate `j` (0-based among the angles).
    pub fn angle(&self, s: &Config, j: usize) -> f64 {
        let (lo, hi) = self.joint_ranges[j];
        lo + s[self.workspace_dim() + j] * (hi - lo)
    }

    pub fn angle_span(&self, j: usize) -> f64 {
        let (lo, hi) = self.joint_ranges[j];
        hi - lo
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_ranges.len() != self.dof() - self.workspace_dim() {
            return Err(invalid("joint range count does not match robot kind"));
        }
        if self.kind != RobotKind::Point2 && !(self.link_length > 0.0) {
            return Err(invalid("link length must be positive"));
        }
        let bound = match self.kind {
            RobotKind::Snake5 => Some((-PI / 4.0, PI / 4.0)),
            RobotKind::Spacecraft7 => Some((0.0, PI / 2.0)),
            _ => None,
        };
        let skip = usize::from(self.kind == RobotKind::Snake5);
        for &(lo, hi) in self.joint_ranges.iter().skip(skip) {
            if lo > hi {
                return Err(invalid("joint range with lo > hi"));
            }
            if let Some((blo, bhi)) = bound {
                if lo < blo - 1e-12 || hi > bhi + 1e-12 {
                    return Err(invalid("joint range exceeds the robot's limits"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Obstacles {
    Grid(OccupancyGrid),
    Cuboids(CuboidSet),
}

/// One planning task: robot, obstacles, start, goal region and cost weights.
#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub robot: RobotModel,
    pub obstacles: Obstacles,
    pub start: Config,
    pub goal: Config,
    pub goal_radius: f64,
    pub w_len: f64,
    pub w_rot: f64,
    pub seed: u64,
    fingerprint: u64,
}

impl PlanningProblem {
    /// Builds a problem and checks its invariants (valid configs, free start
    /// and goal centre).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        robot: RobotModel,
        obstacles: Obstacles,
        start: Config,
        goal: Config,
        goal_radius: f64,
        w_len: f64,
        w_rot: f64,
        seed: u64,
    ) -> Result<Self> {
        robot.validate()?;
        match (&obstacles, robot.workspace_dim()) {
            (Obstacles::Grid(_), 2) | (Obstacles::Cuboids(_), 3) => {}
            _ => return Err(invalid("obstacle type does not match robot workspace")),
        }
        for (name, c) in [("start", &start), ("goal", &goal)] {
            if c.dim() != robot.dof() || !c.in_unit_cube() {
                return Err(invalid(format!("{name} is not a valid configuration")));
            }
        }
        if !(goal_radius > 0.0) || w_len < 0.0 || w_rot < 0.0 {
            return Err(invalid("goal radius must be positive and weights non-negative"));
        }
        let mut p = PlanningProblem {
            robot,
            obstacles,
            start,
            goal,
            goal_radius,
            w_len,
            w_rot,
            seed,
            fingerprint: 0,
        };
        if !p.is_free(&p.start) {
            return Err(invalid("start configuration is in collision"));
        }
        if !p.is_free(&p.goal) {
            return Err(invalid("goal configuration is in collision"));
        }
        p.fingerprint = p.compute_fingerprint();
        Ok(p)
    }

    pub fn dof(&self) -> usize {
        self.robot.dof()
    }

    /// Content hash identifying this problem (used as a cache key).
    pub fn id(&self) -> u64 {
        self.fingerprint
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.robot.kind.hash(&mut h);
        for v in self.start.0.iter().chain(&self.goal.0) {
            v.to_bits().hash(&mut h);
        }
        for v in [self.goal_radius, self.w_len, self.w_rot, self.robot.link_length] {
            v.to_bits().hash(&mut h);
        }
        self.seed.hash(&mut h);
        match &self.obstacles {
            Obstacles::Grid(g) => {
                g.side.hash(&mut h);
                g.cells.hash(&mut h);
            }
            Obstacles::Cuboids(c) => {
                for b in &c.boxes {
                    for v in b.min.iter().chain(&b.max) {
                        v.to_bits().hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }

    /// Static check of a single configuration.
    pub fn is_free(&self, s: &Config) -> bool {
        s.dim() == self.dof()
            && s.in_unit_cube()
            && robot_segments(&self.robot, s)
                .iter()
                .all(|shape| !shape_collides(&self.obstacles, shape))
    }

    /// Interpolation resolution: the largest distance any robot point may
    /// move between two consecutive checked configurations.
    pub fn resolution(&self) -> f64 {
        match &self.obstacles {
            Obstacles::Grid(g) => 0.5 / g.side as f64,
            Obstacles::Cuboids(c) => c.min_edge().map_or(0.025, |e| 0.5 * e),
        }
    }

    /// Upper bound on how far any point of the robot moves along `[a, b]`.
    pub fn motion_bound(&self, a: &Config, b: &Config) -> f64 {
        robot::motion_bound(&self.robot, a, b)
    }

    /// True iff the straight configuration-space segment `[a, b]` is
    /// collision free. One call is one collision check in the metrics.
    pub fn collision_free(&self, a: &Config, b: &Config) -> bool {
        let steps = (self.motion_bound(a, b) / self.resolution()).ceil().max(1.0) as usize;
        (0..=steps).all(|i| self.is_free(&a.lerp(b, i as f64 / steps as f64)))
    }

    /// Path length plus weighted joint rotation between two configurations.
    pub fn segment_cost(&self, a: &Config, b: &Config) -> f64 {
        let wd = self.robot.workspace_dim();
        let len = a.0[..wd]
            .iter()
            .zip(&b.0[..wd])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let rot: f64 = (0..self.robot.joint_ranges.len())
            .map(|j| (b[wd + j] - a[wd + j]).abs() * self.robot.angle_span(j))
            .sum();
        self.w_len * len + self.w_rot * rot
    }

    /// Uniform draw from free space by rejection.
    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Config> {
        for _ in 0..SAMPLE_FREE_BUDGET {
            let s = self.sample_uniform(rng);
            if self.is_free(&s) {
                return Ok(s);
            }
        }
        Err(Error::EnvironmentDegenerate(format!(
            "no free configuration in {SAMPLE_FREE_BUDGET} draws"
        )))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        Config((0..self.dof()).map(|_| rng.random::<f64>()).collect())
    }

    /// Closed goal ball membership.
    pub fn in_goal(&self, s: &Config) -> bool {
        s.dist(&self.goal) <= self.goal_radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid(side: usize) -> Obstacles {
        Obstacles::Grid(OccupancyGrid::empty(side))
    }

    fn point_problem(obstacles: Obstacles) -> PlanningProblem {
        PlanningProblem::new(
            RobotModel::new(RobotKind::Point2),
            obstacles,
            Config::new(vec![0.1, 0.1]),
            Config::new(vec![0.9, 0.9]),
            0.05,
            1.0,
            0.1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn steer_inside_and_clipped() {
        let o = Config::new(vec![0.0, 0.0]);
        assert_eq!(o.steer(&Config::new(vec![0.05, 0.0]), 0.1).0, vec![0.05, 0.0]);
        let s = o.steer(&Config::new(vec![1.0, 0.0]), 0.1);
        assert!((s[0] - 0.1).abs() < 1e-15 && s[1] == 0.0);
    }

    #[test]
    fn cost_examples() {
        let p = point_problem(open_grid(4));
        let a = Config::new(vec![0.0, 0.0]);
        let b = Config::new(vec![0.3, 0.4]);
        assert_eq!(p.segment_cost(&a, &a), 0.0);
        assert!((p.segment_cost(&a, &b) - 0.5).abs() < 1e-12);

        let mut rigid = PlanningProblem::new(
            RobotModel::new(RobotKind::Rigid3),
            open_grid(4),
            Config::new(vec![0.5, 0.5, 0.5]),
            Config::new(vec![0.5, 0.5, 0.625]),
            0.01,
            1.0,
            1.0,
            0,
        )
        .unwrap();
        rigid.w_rot = 1.0;
        // 1/8 of the 2π range is a quarter-pi turn
        let c = rigid.segment_cost(&rigid.start, &rigid.goal);
        assert!((c - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn cost_is_additive_along_interpolant() {
        let p = PlanningProblem::new(
            RobotModel::new(RobotKind::Snake5),
            open_grid(4),
            Config::new(vec![0.3, 0.3, 0.2, 0.4, 0.6]),
            Config::new(vec![0.4, 0.3, 0.5, 0.5, 0.5]),
            0.05,
            1.0,
            0.1,
            0,
        )
        .unwrap();
        let (a, c) = (&p.start, &p.goal);
        let b = a.lerp(c, 0.37);
        let whole = p.segment_cost(a, c);
        let split = p.segment_cost(a, &b) + p.segment_cost(&b, c);
        assert!((whole - split).abs() < 1e-12);
        assert!((p.segment_cost(a, c) - p.segment_cost(c, a)).abs() < 1e-15);
    }

    #[test]
    fn goal_membership_is_closed() {
        let p = point_problem(open_grid(4));
        assert!(p.in_goal(&p.goal));
        let edge = Config::new(vec![0.9 + 0.05, 0.9]);
        // exact boundary in binary arithmetic
        let r = edge.dist(&p.goal);
        let mut q = p.clone();
        q.goal_radius = r;
        assert!(q.in_goal(&edge));
        assert!(!p.in_goal(&Config::new(vec![0.9 + 0.1, 0.9])));
    }

    #[test]
    fn sampling_open_space_accepts_first_draw() {
        let p = point_problem(open_grid(4));
        let mut rng = crate::rng::rng_from_seed(3);
        let mut rng2 = crate::rng::rng_from_seed(3);
        let s = p.sample_free(&mut rng).unwrap();
        assert_eq!(s, p.sample_uniform(&mut rng2));
        let mut rng3 = crate::rng::rng_from_seed(3);
        assert_eq!(s, p.sample_free(&mut rng3).unwrap());
    }

    #[test]
    fn sampling_fully_blocked_is_degenerate() {
        let mut g = OccupancyGrid::empty(2);
        let p = point_problem(Obstacles::Grid(g.clone()));
        g.cells = vec![1; 4];
        let mut blocked = p.clone();
        blocked.obstacles = Obstacles::Grid(g);
        let mut rng = crate::rng::rng_from_seed(0);
        assert!(matches!(
            blocked.sample_free(&mut rng),
            Err(Error::EnvironmentDegenerate(_))
        ));
    }

    #[test]
    fn rejects_colliding_start() {
        let mut g = OccupancyGrid::empty(2);
        g.set(0, 0, true);
        let r = PlanningProblem::new(
            RobotModel::new(RobotKind::Point2),
            Obstacles::Grid(g),
            Config::new(vec![0.1, 0.1]),
            Config::new(vec![0.9, 0.9]),
            0.05,
            1.0,
            0.1,
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn segment_through_wall_blocked() {
        let mut g = OccupancyGrid::empty(3);
        g.set(1, 1, true);
        let p = point_problem(Obstacles::Grid(g));
        let a = Config::new(vec![0.1, 0.5]);
        let b = Config::new(vec![0.9, 0.5]);
        assert!(p.collision_free(&a, &a));
        assert!(!p.collision_free(&a, &b));
        let c = Config::new(vec![0.1, 0.1]);
        let d = Config::new(vec![0.9, 0.1]);
        assert!(p.collision_free(&c, &d));
    }

    #[test]
    fn robot_kind_roundtrip() {
        for k in RobotKind::ALL {
            assert_eq!(k.name().parse::<RobotKind>().unwrap(), k);
            assert_eq!(RobotKind::from_code(k.code()), Some(k));
        }
        assert!("hexapod".parse::<RobotKind>().is_err());
    }
}
