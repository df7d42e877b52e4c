use crate::error::{invalid, Result};

/// `alpha * eps`.
pub fn anneal(eps: f64, alpha: f64) -> f64 {
    alpha * eps
}

/// Mixture weight of plain RRT expansion over training.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsSchedule {
    Constant(f64),
    /// Starts at `initial` and is multiplied by `alpha` after every
    /// parameter update.
    Geometric { initial: f64, alpha: f64 },
    /// `(first problem index, eps)` steps, starts strictly increasing and
    /// values non-increasing.
    Piecewise(Vec<(usize, f64)>),
}

impl EpsSchedule {
    /// The published table for 2000 training problems (1 for the first
    /// half, then 0.5 lowered by 0.1 every 200 problems down to 0.1),
    /// with every break point scaled by `total / 2000`.
    pub fn piecewise(total: usize) -> Self {
        let at = |i: usize| (i * total).div_ceil(2000);
        let mut table: Vec<(usize, f64)> = vec![(0, 1.0)];
        for j in 0..5 {
            let step = (at(1000 + 200 * j), (5 - j) as f64 / 10.0);
            // short runs squeeze several steps onto one problem; the last wins
            match table.last_mut() {
                Some(last) if last.0 == step.0 => *last = step,
                _ => table.push(step),
            }
        }
        EpsSchedule::Piecewise(table)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| (0.0..=1.0).contains(&e);
        match self {
            EpsSchedule::Constant(e) if ok(*e) => Ok(()),
            EpsSchedule::Geometric { initial, alpha } if ok(*initial) && *alpha > 0.0 && *alpha < 1.0 => Ok(()),
            EpsSchedule::Piecewise(t)
                if !t.is_empty()
                    && t[0].0 == 0
                    && t.iter().all(|&(_, e)| ok(e))
                    && t.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 >= w[1].1) =>
            {
                Ok(())
            }
            _ => Err(invalid(format!("invalid exploration schedule {self:?}"))),
        }
    }

    /// Weight for problem `epoch` after `updates` parameter updates.
    pub fn at(&self, epoch: usize, updates: usize) -> f64 {
        match self {
            EpsSchedule::Constant(e) => *e,
            EpsSchedule::Geometric { initial, alpha } => (0..updates).fold(*initial, |e, _| anneal(e, *alpha)),
            EpsSchedule::Piecewise(t) => t.iter().take_while(|&&(start, _)| start <= epoch).last().map_or(1.0, |x| x.1),
        }
    }
}
