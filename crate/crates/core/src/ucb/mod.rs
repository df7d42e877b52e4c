//! Upper confidence scores `phi(s) = rbar_t(s) + lambda * sigma_t(s)` over the
//! sequence of tree nodes selected so far.
//!
//! Two parametrisations share one history type:
//!
//! - kernel smoothing (KS): `rbar_t(s) = sum k(s', s) r(s') / w(s)` and
//!   `sigma_t(s) = sqrt(log(sum_{s'} w(s')) / w(s))` with
//!   `w(s) = sum_{s' in S_t} k(s', s)`;
//! - Gaussian process (GP): `rbar_t(s) = k_t(s)^T (K_t + alpha I)^-1 r_t` and
//!   `sigma_t^2(s) = k(s, s) - k_t(s)^T (K_t + alpha I)^-1 k_t(s)`, backed by an
//!   incrementally grown Cholesky factor.
//!
//! Scoring many points repeatedly (every tree node, every expansion) goes
//! through [`PointStats`], which folds in only the history entries added
//! since the last refresh.

mod cholesky;

use crate::env::Config;
use crate::error::{Error, Result};

pub use cholesky::Cholesky;

/// Lower clamp on the kernel mass `w(s)`.
pub const W_EPS: f64 = 1e-8;
pub const DEFAULT_BANDWIDTH: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_GP_NOISE: f64 = 0.01;
pub const GP_HISTORY_CAP: usize = 500;

/// Gaussian (RBF) kernel `exp(-|a - b|^2 / (2 h^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub bandwidth: f64,
}

impl RbfKernel {
    pub fn new(bandwidth: f64) -> Self {
        assert!(bandwidth > 0.0, "kernel bandwidth must be positive");
        RbfKernel { bandwidth }
    }

    pub fn eval(&self, a: &Config, b: &Config) -> f64 {
        (-a.dist_sq(b) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UcbKind {
    KernelSmoothing,
    GaussianProcess { noise: f64 },
}

/// Selected nodes with their frozen rewards.
#[derive(Debug, Clone)]
pub struct UcbHistory {
    kind: UcbKind,
    kernel: RbfKernel,
    lambda: f64,
    points: Vec<Config>,
    rewards: Vec<f64>,
    /// Sum of the whole Gram matrix, i.e. `sum_{s'} w(s')` (KS).
    gram_sum: f64,
    /// Factor of `K_t + alpha I` (GP).
    factor: Cholesky,
    /// `L^-1 r_t` (GP).
    z: Vec<f64>,
    /// Bumped whenever the factor is rebuilt so cached stats are discarded.
    epoch: u64,
    /// Number of entries dropped from the front (GP cap).
    dropped: usize,
}

/// Cached per-point accumulators against a [`UcbHistory`].
#[derive(Debug, Clone, Default)]
pub struct PointStats {
    epoch: u64,
    seen: usize,
    w: f64,
    wr: f64,
    /// `L^-1 k_t(s)` (GP).
    v: Vec<f64>,
}

impl UcbHistory {
    pub fn new(kind: UcbKind, kernel: RbfKernel, lambda: f64) -> Self {
        assert!(lambda >= 0.0, "exploration weight must be non-negative");
        if let UcbKind::GaussianProcess { noise } = kind {
            assert!(noise > 0.0, "GP noise must be positive");
        }
        UcbHistory {
            kind,
            kernel,
            lambda,
            points: Vec::new(),
            rewards: Vec::new(),
            gram_sum: 0.0,
            factor: Cholesky::default(),
            z: Vec::new(),
            epoch: 0,
            dropped: 0,
        }
    }

    pub fn kernel_smoothing(bandwidth: f64, lambda: f64) -> Self {
        Self::new(UcbKind::KernelSmoothing, RbfKernel::new(bandwidth), lambda)
    }

    pub fn gaussian_process(bandwidth: f64, lambda: f64, noise: f64) -> Self {
        Self::new(UcbKind::GaussianProcess { noise }, RbfKernel::new(bandwidth), lambda)
    }

    pub fn kind(&self) -> UcbKind {
        self.kind
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Config] {
        &self.points
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    fn noise(&self) -> f64 {
        match self.kind {
            UcbKind::GaussianProcess { noise } => noise,
            UcbKind::KernelSmoothing => 0.0,
        }
    }

    fn gram(&self) -> Vec<Vec<f64>> {
        let a = self.noise();
        (0..self.points.len())
            .map(|i| {
                (0..self.points.len())
                    .map(|j| {
                        self.kernel.eval(&self.points[i], &self.points[j]) + if i == j { a } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    /// Appends a selected node and its reward.
    pub fn update(&mut self, s: Config, reward: f64) -> Result<()> {
        match self.kind {
            UcbKind::KernelSmoothing => {
                let cross: f64 = self.points.iter().map(|p| self.kernel.eval(p, &s)).sum();
                self.gram_sum += 2.0 * cross + self.kernel.eval(&s, &s);
                self.points.push(s);
                self.rewards.push(reward);
                Ok(())
            }
            UcbKind::GaussianProcess { noise } => {
                if self.points.len() >= GP_HISTORY_CAP {
                    self.points.remove(0);
                    self.rewards.remove(0);
                    self.dropped += 1;
                    self.points.push(s);
                    self.rewards.push(reward);
                    return self.refactor();
                }
                let kx: Vec<f64> = self.points.iter().map(|p| self.kernel.eval(p, &s)).collect();
                let diag = self.kernel.eval(&s, &s) + noise;
                self.points.push(s);
                self.rewards.push(reward);
                match self.factor.extend(&kx, diag) {
                    Some(row) => {
                        let d = row[row.len() - 1];
                        let dot: f64 = row[..row.len() - 1].iter().zip(&self.z).map(|(l, z)| l * z).sum();
                        self.z.push((reward - dot) / d);
                        Ok(())
                    }
                    None => self.refactor(),
                }
            }
        }
    }

    /// Rebuilds the GP factor from scratch.
    fn refactor(&mut self) -> Result<()> {
        self.epoch += 1;
        self.factor = Cholesky::factor(&self.gram())
            .ok_or_else(|| Error::Numeric("GP Gram matrix is not positive definite".into()))?;
        self.z = self.factor.solve_lower(&self.rewards);
        Ok(())
    }

    /// Largest absolute entry difference between the incremental factor and
    /// a fresh factorisation (GP only; zero for KS).
    pub fn factor_drift(&self) -> f64 {
        if matches!(self.kind, UcbKind::KernelSmoothing) || self.points.is_empty() {
            return 0.0;
        }
        match Cholesky::factor(&self.gram()) {
            Some(full) => self.factor.max_abs_diff(&full),
            None => f64::INFINITY,
        }
    }

    /// Fresh accumulators for `s`.
    pub fn stats(&self, s: &Config) -> PointStats {
        let mut st = PointStats {
            epoch: self.epoch,
            ..PointStats::default()
        };
        self.refresh(&mut st, s);
        st
    }

    /// Folds history entries added since the last refresh into `stats`.
    pub fn refresh(&self, stats: &mut PointStats, s: &Config) {
        if stats.epoch != self.epoch || stats.seen > self.points.len() {
            *stats = PointStats {
                epoch: self.epoch,
                ..PointStats::default()
            };
        }
        for i in stats.seen..self.points.len() {
            let k = self.kernel.eval(&self.points[i], s);
            match self.kind {
                UcbKind::KernelSmoothing => {
                    stats.w += k;
                    stats.wr += k * self.rewards[i];
                }
                UcbKind::GaussianProcess { .. } => {
                    let row = self.factor.row(i);
                    let dot: f64 = row[..i].iter().zip(&stats.v).map(|(l, v)| l * v).sum();
                    stats.v.push((k - dot) / row[i]);
                }
            }
        }
        stats.seen = self.points.len();
    }

    /// `(rbar, sigma)` from up-to-date accumulators.
    pub fn mean_and_sigma(&self, stats: &PointStats, s: &Config) -> (f64, f64) {
        debug_assert_eq!(stats.seen, self.points.len());
        match self.kind {
            UcbKind::KernelSmoothing => {
                if self.points.is_empty() {
                    return (0.0, f64::INFINITY);
                }
                // far from every sample the clamp pulls the mean towards 0
                let w = stats.w.max(W_EPS);
                let rbar = stats.wr / w;
                let sigma = (self.gram_sum.ln().max(0.0) / w).sqrt();
                (rbar, sigma)
            }
            UcbKind::GaussianProcess { .. } => {
                let rbar: f64 = stats.v.iter().zip(&self.z).map(|(v, z)| v * z).sum();
                let var = self.kernel.eval(s, s) - stats.v.iter().map(|v| v * v).sum::<f64>();
                (rbar, var.max(0.0).sqrt())
            }
        }
    }

    pub fn score_with(&self, stats: &PointStats, s: &Config) -> f64 {
        if matches!(self.kind, UcbKind::KernelSmoothing) && self.points.is_empty() {
            return f64::INFINITY;
        }
        let (rbar, sigma) = self.mean_and_sigma(stats, s);
        rbar + self.lambda * sigma
    }

    /// `phi(s)`. Empty KS history scores `+inf`; empty GP history scores the
    /// prior bonus `lambda * sqrt(k(s, s))`.
    pub fn score(&self, s: &Config) -> f64 {
        let st = self.stats(s);
        self.score_with(&st, s)
    }
}

/// Kernel-smoothing UCB score of `s` (panics if `hist` is a GP history).
pub fn ks_ucb_score(hist: &UcbHistory, s: &Config) -> f64 {
    assert!(matches!(hist.kind(), UcbKind::KernelSmoothing));
    hist.score(s)
}

/// Gaussian-process UCB score of `s` (panics if `hist` is a KS history).
pub fn gp_ucb_score(hist: &UcbHistory, s: &Config) -> f64 {
    assert!(matches!(hist.kind(), UcbKind::GaussianProcess { .. }));
    hist.score(s)
}
