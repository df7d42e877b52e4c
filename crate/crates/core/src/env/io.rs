use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Config, Cuboid, CuboidSet, Obstacles, OccupancyGrid, PlanningProblem, RobotKind, RobotModel};
use crate::error::{Error, Result};

pub const PROBLEM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub side: usize,
    /// Row-major `0`/`1` characters, `side * side` of them.
    pub cells: String,
}

/// On-disk JSON form of a [`PlanningProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub robot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuboids: Option<Vec<[[f64; 3]; 2]>>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub goal_radius: f64,
    pub w_len: f64,
    pub w_rot: f64,
    pub seed: u64,
}

impl ProblemFile {
    pub fn from_problem(p: &PlanningProblem) -> Self {
        let (grid, cuboids) = match &p.obstacles {
            Obstacles::Grid(g) => (
                Some(GridJson {
                    side: g.side,
                    cells: g.cells.iter().map(|&c| if c != 0 { '1' } else { '0' }).collect(),
                }),
                None,
            ),
            Obstacles::Cuboids(set) => (
                None,
                Some(set.boxes.iter().map(|b| [b.min, b.max]).collect()),
            ),
        };
        ProblemFile {
            version: PROBLEM_FORMAT_VERSION,
            robot: p.robot.kind.name().to_string(),
            grid,
            cuboids,
            start: p.start.0.clone(),
            goal: p.goal.0.clone(),
            goal_radius: p.goal_radius,
            w_len: p.w_len,
            w_rot: p.w_rot,
            seed: p.seed,
        }
    }

    pub fn into_problem(self) -> Result<PlanningProblem> {
        let fmt = |m: &str| Error::ProblemFormat(m.to_string());
        if self.version != PROBLEM_FORMAT_VERSION {
            return Err(fmt(&format!("unsupported version {}", self.version)));
        }
        let kind: RobotKind = self.robot.parse()?;
        let obstacles = match (self.grid, self.cuboids) {
            (Some(g), None) => {
                if g.side == 0 || g.cells.len() != g.side * g.side {
                    return Err(fmt("grid cell string has the wrong length"));
                }
                let cells = g
                    .cells
                    .bytes()
                    .map(|b| match b {
                        b'0' => Ok(0),
                        b'1' => Ok(1),
                        _ => Err(fmt("grid cells must be 0 or 1")),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                Obstacles::Grid(OccupancyGrid { side: g.side, cells })
            }
            (None, Some(boxes)) => {
                let boxes: Vec<Cuboid> = boxes.into_iter().map(|[min, max]| Cuboid { min, max }).collect();
                for b in &boxes {
                    if (0..3).any(|k| b.min[k] > b.max[k] || b.min[k] < 0.0 || b.max[k] > 1.0) {
                        return Err(fmt("cuboid outside the unit cube or inverted"));
                    }
                }
                Obstacles::Cuboids(CuboidSet { boxes })
            }
            _ => return Err(fmt("exactly one of grid or cuboids must be present")),
        };
        PlanningProblem::new(
            RobotModel::new(kind),
            obstacles,
            Config::new(self.start),
            Config::new(self.goal),
            self.goal_radius,
            self.w_len,
            self.w_rot,
            self.seed,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl PlanningProblem {
    pub fn to_json(&self) -> Result<String> {
        ProblemFile::from_problem(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ProblemFile::from_json(text)?.into_problem()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
