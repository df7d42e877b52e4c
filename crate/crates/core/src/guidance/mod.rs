//! Learned value function and expansion policy.
//!
//! A state is embedded as an attention map over a `d x d x d_a` latent grid
//! (spatial softmax over the planar position times a softmax over the
//! remaining coordinates). The goal embedding and the resized obstacle map
//! seed `T_vi` rounds of convolutional value iteration; the resulting latent
//! tensor is contracted with a state's attention map to give the feature
//! vector `psi(s)`, from which small dense heads predict the cost-to-go and
//! the mean of a Gaussian policy over the next state.
//!
//! The policy head predicts a step, so the policy mean is `s + h(psi(s))`.

mod checkpoint;
mod map;
mod model;
mod params;
mod tape;
mod tensor;

use std::any::TypeId;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::env::{Config, PlanningProblem};
use crate::error::{invalid, Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use map::map_features;
pub use params::{CellKind, GuidanceParams, Hyper, Layout, HEAD_WIDTH, SPATIAL_WIDTH};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

use model::{path_loss, path_pattern, Graph};

/// Non-negative attention weights over the latent grid, summing to one.
/// Stored as `[1, d, d, d_a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<S = f32>(pub Tensor<S>);

impl<S: Scalar> AttentionMap<S> {
    pub fn get(&self, i: usize, j: usize, l: usize) -> S {
        let (d, da) = (self.0.shape[1], self.0.shape[3]);
        self.0.data[(i * d + j) * da + l]
    }

    pub fn total(&self) -> f64 {
        self.0.data.iter().map(|v| v.f64()).sum()
    }
}

/// Latent value tensor `[p, d, d, d_a]` for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentValue<S = f32> {
    pub nu: Tensor<S>,
    pub problem_id: u64,
    pub params_version: u64,
}

pub fn embed_state<S: Scalar>(params: &GuidanceParams<S>, s: &Config) -> AttentionMap<S> {
    let mut g = Graph::new(params);
    let mu = g.embed(s.coords());
    AttentionMap(g.tape.value(mu).clone())
}

/// Runs value iteration for `problem` without consulting the cache.
pub fn plan_latent_uncached<S: Scalar>(params: &GuidanceParams<S>, problem: &PlanningProblem) -> LatentValue<S> {
    let mut g = Graph::new(params);
    let nu = g.latent(problem);
    LatentValue {
        nu: g.tape.value(nu).clone(),
        problem_id: problem.id(),
        params_version: params.version(),
    }
}

type CacheKey = (TypeId, u64, u64);
type CacheMap = HashMap<CacheKey, Arc<dyn std::any::Any + Send + Sync>>;

const CACHE_CAPACITY: usize = 512;

fn cache() -> &'static Mutex<CacheMap> {
    static CACHE: OnceLock<Mutex<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Latent value for `problem`, memoised per (problem, parameter version).
pub fn plan_latent<S: Scalar>(params: &GuidanceParams<S>, problem: &PlanningProblem) -> Arc<LatentValue<S>> {
    let key = (TypeId::of::<S>(), problem.id(), params.version());
    if let Some(hit) = cache().lock().unwrap().get(&key) {
        if let Ok(v) = hit.clone().downcast::<LatentValue<S>>() {
            return v;
        }
    }
    let fresh = Arc::new(plan_latent_uncached(params, problem));
    let mut c = cache().lock().unwrap();
    if c.len() >= CACHE_CAPACITY {
        c.clear();
    }
    c.insert(key, fresh.clone());
    fresh
}

/// `psi_k = sum_{ijl} nu_{k,ijl} mu_{ijl}`.
pub fn features<S: Scalar>(nu: &LatentValue<S>, mu: &AttentionMap<S>) -> Result<Vec<S>> {
    if nu.nu.shape.len() != 4 || mu.0.shape.len() != 4 || nu.nu.shape[1..] != mu.0.shape[1..] {
        return Err(invalid(format!(
            "latent shape {:?} does not match attention shape {:?}",
            nu.nu.shape, mu.0.shape
        )));
    }
    let vol = mu.0.len();
    Ok((0..nu.nu.shape[0])
        .map(|k| {
            nu.nu.data[k * vol..(k + 1) * vol]
                .iter()
                .zip(&mu.0.data)
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect())
}

/// `(value, policy mean)` at `s` against a precomputed latent.
pub fn evaluate_with<S: Scalar>(params: &GuidanceParams<S>, latent: &LatentValue<S>, s: &Config) -> (f64, Config) {
    let mut g = Graph::new(params);
    let nu = g.tape.input(latent.nu.clone());
    let mu = g.embed(s.coords());
    let (v, m) = g.heads(nu, mu, s.coords());
    let value = g.tape.value(v).data[0].f64();
    let mean = Config::new(g.tape.value(m).data.iter().map(|x| x.f64()).collect());
    (value, mean)
}

/// Estimated cost-to-go from `s`.
pub fn value<S: Scalar>(params: &GuidanceParams<S>, s: &Config, problem: &PlanningProblem) -> f64 {
    evaluate_with(params, &plan_latent(params, problem), s).0
}

/// Mean of the policy at `s` (before projection).
pub fn policy_mean<S: Scalar>(params: &GuidanceParams<S>, s: &Config, problem: &PlanningProblem) -> Config {
    evaluate_with(params, &plan_latent(params, problem), s).1
}

/// Projects onto `B(center, eta)` and then clamps into the unit cube; the
/// clamp cannot leave the ball because the center is inside the cube.
pub fn project_reachable(x: &Config, center: &Config, eta: f64) -> Config {
    let stepped = center.steer(x, eta);
    Config::new(stepped.coords().iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// `k` draws from `N(mean, sigma^2 I)`, each projected into
/// `B(s, eta) ∩ [0,1]^q`.
pub fn sample_projected<R: Rng + ?Sized>(
    mean: &Config,
    s: &Config,
    sigma: f64,
    k: usize,
    eta: f64,
    rng: &mut R,
) -> Vec<Config> {
    (0..k)
        .map(|_| {
            let raw = Config::new(
                mean.coords()
                    .iter()
                    .map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            project_reachable(&raw, s, eta)
        })
        .collect()
}

pub fn policy_sample<S: Scalar, R: Rng + ?Sized>(
    params: &GuidanceParams<S>,
    s: &Config,
    problem: &PlanningProblem,
    k: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<Config>> {
    if k == 0 {
        return Err(invalid("need at least one policy sample"));
    }
    let mean = policy_mean(params, s, problem);
    Ok(sample_projected(&mean, s, params.hyper().sigma_policy, k, eta, rng))
}

/// Log-density of an isotropic Gaussian.
pub fn gaussian_logpdf(x: &Config, mean: &Config, sigma: f64) -> f64 {
    let q = x.dim() as f64;
    -0.5 * q * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - x.dist_sq(mean) / (2.0 * sigma * sigma)
}

/// Unprojected log-density of `s_next` under the policy at `s`.
pub fn policy_logprob<S: Scalar>(
    params: &GuidanceParams<S>,
    s: &Config,
    s_next: &Config,
    problem: &PlanningProblem,
) -> Result<f64> {
    let sigma = params.hyper().sigma_policy;
    if sigma <= 0.0 {
        return Err(invalid("policy log-density needs a positive standard deviation"));
    }
    Ok(gaussian_logpdf(s_next, &policy_mean(params, s, problem), sigma))
}

/// One training path: states from the start to the goal and their
/// cost-to-go targets.
#[derive(Debug, Clone, Copy)]
pub struct PathExample<'a> {
    pub path: &'a [Config],
    pub targets: &'a [f64],
    pub problem: &'a PlanningProblem,
}

/// Negative policy log-likelihood plus squared value error, summed over the
/// batch, plus `lambda_reg * |W|^2`; and its gradient for every tensor.
///
/// Batch entries are evaluated in parallel and summed in batch order, so
/// the result does not depend on the thread count.
pub fn loss_and_grad<S: Scalar>(
    params: &GuidanceParams<S>,
    batch: &[PathExample<'_>],
    lambda_reg: f64,
) -> Result<(f64, Vec<Tensor<S>>)> {
    if batch.is_empty() {
        return Err(invalid("empty training batch"));
    }
    if params.hyper().sigma_policy <= 0.0 {
        return Err(invalid("training needs a positive policy standard deviation"));
    }
    for ex in batch {
        if ex.path.len() < 2 || ex.targets.len() != ex.path.len() {
            return Err(invalid("every training path needs two or more states and one target per state"));
        }
    }
    let parts: Vec<(f64, Vec<Tensor<S>>)> = batch
        .par_iter()
        .map(|ex| path_loss(params, ex.problem, ex.path, ex.targets))
        .collect();

    let mut loss = 0.0;
    let mut grads: Vec<Tensor<S>> = params.tensors().iter().map(|t| Tensor::zeros(&t.shape)).collect();
    for (ex, (l, g)) in batch.iter().zip(parts) {
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss on problem {:016x}", ex.problem.id())));
        }
        loss += l;
        for (acc, gk) in grads.iter_mut().zip(g) {
            for (a, b) in acc.data.iter_mut().zip(gk.data) {
                *a = *a + b;
            }
        }
    }
    let lam = S::of(lambda_reg);
    let two_lam = S::of(2.0 * lambda_reg);
    for (acc, w) in grads.iter_mut().zip(params.tensors()) {
        loss += (lam * w.sum_sq()).f64();
        for (a, &b) in acc.data.iter_mut().zip(&w.data) {
            *a = *a + two_lam * b;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite regularised loss".into()));
    }
    Ok((loss, grads))
}

/// Branch patterns of the loss over a batch; see [`Tape::branch_pattern`].
/// Finite-difference checks use it to tell when a perturbation crosses a
/// relu or min-pool kink.
pub fn loss_branch_pattern<S: Scalar>(params: &GuidanceParams<S>, batch: &[PathExample<'_>]) -> Vec<u64> {
    batch
        .iter()
        .map(|ex| path_pattern(params, ex.problem, ex.path, ex.targets))
        .collect()
}

/// Value and policy source used by guided expansion.
pub trait Guide: Sync {
    /// `(estimated cost-to-go, policy mean)` at `s`.
    fn evaluate(&self, s: &Config) -> (f64, Config);
    fn sigma(&self) -> f64;
}

/// The network bound to one problem.
pub struct NetGuide<'a> {
    params: &'a GuidanceParams<f32>,
    latent: Arc<LatentValue<f32>>,
}

impl<'a> NetGuide<'a> {
    pub fn new(params: &'a GuidanceParams<f32>, problem: &PlanningProblem) -> Self {
        NetGuide {
            params,
            latent: plan_latent(params, problem),
        }
    }
}

impl Guide for NetGuide<'_> {
    fn evaluate(&self, s: &Config) -> (f64, Config) {
        evaluate_with(self.params, &self.latent, s)
    }

    fn sigma(&self) -> f64 {
        self.params.hyper().sigma_policy
    }
}
