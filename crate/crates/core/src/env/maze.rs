use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Binary occupancy grid spanning the unit square.
///
/// Cell `(row, col)` covers `x in [col/side, (col+1)/side]` and
/// `y in [row/side, (row+1)/side]`; storage is row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    pub side: usize,
    pub cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn empty(side: usize) -> Self {
        OccupancyGrid {
            side,
            cells: vec![0; side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, occupied: bool) {
        self.cells[row * self.side + col] = u8::from(occupied);
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.side as f64
    }

    /// Cell containing a workspace point, `None` outside the unit square.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return None;
        }
        let n = self.side as f64;
        let col = ((x * n) as usize).min(self.side - 1);
        let row = ((y * n) as usize).min(self.side - 1);
        Some((row, col))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.side)
            .flat_map(move |r| (0..self.side).map(move |c| (r, c)))
            .filter(move |&(r, c)| !self.get(r, c))
    }

    /// 4-connected free neighbours of a cell.
    pub fn free_neighbors(&self, row: usize, col: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if row > 0 {
            out.push((row - 1, col));
        }
        if row + 1 < self.side {
            out.push((row + 1, col));
        }
        if col > 0 {
            out.push((row, col - 1));
        }
        if col + 1 < self.side {
            out.push((row, col + 1));
        }
        out.retain(|&(r, c)| !self.get(r, c));
        out
    }
}

/// Perfect maze by the recursive backtracker.
///
/// Rooms sit on even `(row, col)` indices and walls in between; the square
/// boundary acts as the outer wall. For an odd `side` the last row and
/// column are rooms, for an even one they stay walls.
pub fn generate_maze(seed: u64, side: usize) -> Result<OccupancyGrid> {
    if side < 1 {
        return Err(invalid("maze side must be at least 1"));
    }
    let mut grid = OccupancyGrid {
        side,
        cells: vec![1; side * side],
    };
    let rooms = side.div_ceil(2);
    let mut rng = rng_from_seed(seed);
    let mut visited = vec![false; rooms * rooms];
    let start = (rng.random_range(0..rooms), rng.random_range(0..rooms));
    visited[start.0 * rooms + start.1] = true;
    grid.set(2 * start.0, 2 * start.1, false);
    let mut stack = vec![start];

    while let Some(&(r, c)) = stack.last() {
        let mut options = Vec::with_capacity(4);
        if r > 0 && !visited[(r - 1) * rooms + c] {
            options.push((r - 1, c));
        }
        if r + 1 < rooms && !visited[(r + 1) * rooms + c] {
            options.push((r + 1, c));
        }
        if c > 0 && !visited[r * rooms + c - 1] {
            options.push((r, c - 1));
        }
        if c + 1 < rooms && !visited[r * rooms + c + 1] {
            options.push((r, c + 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (nr, nc) = options[rng.random_range(0..options.len())];
        visited[nr * rooms + nc] = true;
        // carve the wall between the two rooms, then the room itself
        grid.set(r + nr, c + nc, false);
        grid.set(2 * nr, 2 * nc, false);
        stack.push((nr, nc));
    }
    Ok(grid)
}
