//! Forward graph of the guidance network on a [`Tape`].

use super::map::map_features;
use super::params::{CellKind, GuidanceParams};
use super::tape::{Tape, Var};
use super::tensor::{Scalar, Tensor};
use crate::env::PlanningProblem;

/// Records the network on a tape bound to one parameter set.
pub(crate) struct Graph<'p, S: Scalar> {
    pub tape: Tape<'p, S>,
    params: &'p GuidanceParams<S>,
    vars: Vec<Option<Var>>,
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(params: &'p GuidanceParams<S>) -> Self {
        Graph {
            tape: Tape::new(params.tensors()),
            params,
            vars: vec![None; params.tensors().len()],
        }
    }

    /// Parameter leaf, created once per tape.
    fn p(&mut self, k: usize) -> Var {
        if let Some(v) = self.vars[k] {
            return v;
        }
        let v = self.tape.param(k);
        self.vars[k] = Some(v);
        v
    }

    fn dense(&mut self, x: Var, (w, b): (usize, usize)) -> Var {
        let (w, b) = (self.p(w), self.p(b));
        self.tape.dense(x, w, b)
    }

    fn conv(&mut self, x: Var, (w, b): (usize, usize)) -> Var {
        let (w, b) = (self.p(w), self.p(b));
        self.tape.conv(x, w, Some(b))
    }

    /// Attention map `mu(s)` with shape `[1, d, d, d_a]`.
    pub fn embed(&mut self, s: &[f64]) -> Var {
        let h = self.params.hyper();
        let lay = self.params.layout();
        let d = h.d;
        let mut f0 = Vec::with_capacity(4 * d * d);
        for ch in 0..4 {
            for i in 0..d {
                for j in 0..d {
                    // planar position and cell centres, both in grid units
                    let v = match ch {
                        0 => s[0] * d as f64,
                        1 => s[1] * d as f64,
                        2 => i as f64 + 0.5,
                        _ => j as f64 + 0.5,
                    };
                    f0.push(S::of(v));
                }
            }
        }
        let mut x = self.tape.input(Tensor::from_vec(&[4, d, d, 1], f0));
        let spatial = lay.spatial.clone();
        for (n, &layer) in spatial.iter().enumerate() {
            x = self.conv(x, layer);
            // the last layer stays linear so the logits can go negative
            if n + 1 < spatial.len() {
                x = self.tape.relu(x);
            }
        }
        let mu_w = self.tape.softmax(x);

        let rest: Vec<S> = s[2..].iter().map(|&v| S::of(v)).collect();
        let mut z = self.tape.input(Tensor::from_vec(&[rest.len()], rest));
        let config = lay.config.clone();
        for (n, &layer) in config.iter().enumerate() {
            z = self.dense(z, layer);
            if n + 1 < config.len() {
                z = self.tape.relu(z);
            }
        }
        let mu_h = self.tape.softmax(z);
        self.tape.outer(mu_w, mu_h)
    }

    /// Latent value tensor `nu` with shape `[p, d, d, d_a]`.
    pub fn latent(&mut self, problem: &PlanningProblem) -> Var {
        let h = self.params.hyper().clone();
        let lay = self.params.layout().clone();
        let (d, da) = (h.d, h.d_a);

        let mu_goal = self.embed(problem.goal.coords());
        let channels = map_features(problem, d);
        let mut map = Vec::with_capacity(channels.len() * d * d * da);
        for ch in &channels {
            for &v in ch {
                map.extend(std::iter::repeat_n(S::of(v), da));
            }
        }
        let map = self.tape.input(Tensor::from_vec(&[channels.len(), d, d, da], map));
        let x = self.tape.concat(&[mu_goal, map]);
        let z = self.conv(x, lay.w0);
        let z = self.tape.sigmoid(z);
        let width = self.tape.value(z).shape[0] - 1;
        let mut nu = self.tape.slice(z, 0, width);
        let reward = self.tape.slice(z, width, 1);

        match h.cell {
            CellKind::MinPool => {
                for _ in 0..h.t_vi {
                    let x = self.tape.concat(&[nu, reward]);
                    let y = self.conv(x, (lay.w1[0], lay.w1[1]));
                    nu = self.tape.group_min(y, h.k_a);
                }
                nu
            }
            CellKind::Lstm => {
                let de = h.d_e;
                let mut c = self.tape.input(Tensor::zeros(&[de, d, d, da]));
                for _ in 0..h.t_vi {
                    let x = self.tape.concat(&[nu, reward]);
                    let xin = self.conv(x, (lay.w1[0], lay.w1[1]));
                    let xh = self.tape.concat(&[xin, nu]);
                    let gates = self.conv(xh, (lay.w1[2], lay.w1[3]));
                    let gi = self.tape.slice(gates, 0, de);
                    let gf = self.tape.slice(gates, de, de);
                    let gg = self.tape.slice(gates, 2 * de, de);
                    let go = self.tape.slice(gates, 3 * de, de);
                    let i = self.tape.sigmoid(gi);
                    let f = self.tape.sigmoid(gf);
                    let g = self.tape.tanh(gg);
                    let o = self.tape.sigmoid(go);
                    let fc = self.tape.mul(f, c);
                    let ig = self.tape.mul(i, g);
                    c = self.tape.add(fc, ig);
                    let tc = self.tape.tanh(c);
                    nu = self.tape.mul(o, tc);
                }
                self.conv(nu, (lay.w1[4], lay.w1[5]))
            }
        }
    }

    /// `(value [1], policy mean [q])` at state `s` given `nu` and `mu(s)`.
    pub fn heads(&mut self, nu: Var, mu: Var, s: &[f64]) -> (Var, Var) {
        let lay = self.params.layout().clone();
        let psi = self.tape.contract(nu, mu);
        let hv = self.dense(psi, lay.w2[0]);
        let hv = self.tape.relu(hv);
        let value = self.dense(hv, lay.w2[1]);
        let hp = self.dense(psi, lay.w3[0]);
        let hp = self.tape.relu(hp);
        let step = self.dense(hp, lay.w3[1]);
        let here = self.tape.input(Tensor::from_vec(&[s.len()], s.iter().map(|&v| S::of(v)).collect()));
        let mean = self.tape.add(here, step);
        (value, mean)
    }
}

/// Records the unregularised loss of one path; returns the graph, the loss
/// node and the constant part of the log-density.
fn path_graph<'p, S: Scalar>(
    params: &'p GuidanceParams<S>,
    problem: &PlanningProblem,
    path: &[crate::env::Config],
    targets: &[f64],
) -> (Graph<'p, S>, Var, f64) {
    let h = params.hyper();
    let sigma = h.sigma_policy;
    let mut g = Graph::new(params);
    let nu = g.latent(problem);
    let mut terms = Vec::with_capacity(2 * path.len());
    let mut constant = 0.0;
    let inv_two_var = S::of(1.0 / (2.0 * sigma * sigma));
    for (i, s) in path.iter().enumerate() {
        let mu = g.embed(s.coords());
        let (value, mean) = g.heads(nu, mu, s.coords());
        let y = g.tape.input(Tensor::scalar(S::of(targets[i])));
        let err = g.tape.sub(value, y);
        terms.push(g.tape.sum_sq(err));
        if let Some(next) = path.get(i + 1) {
            let target = g.tape.input(Tensor::from_vec(
                &[next.dim()],
                next.coords().iter().map(|&v| S::of(v)).collect(),
            ));
            let diff = g.tape.sub(target, mean);
            let sq = g.tape.sum_sq(diff);
            terms.push(g.tape.scale(sq, inv_two_var));
            constant += 0.5 * h.q as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
        }
    }
    let total = g.tape.sum_all(&terms);
    (g, total, constant)
}

/// Unregularised loss of one path and its cost-to-go targets.
pub(crate) fn path_loss<S: Scalar>(
    params: &GuidanceParams<S>,
    problem: &PlanningProblem,
    path: &[crate::env::Config],
    targets: &[f64],
) -> (f64, Vec<Tensor<S>>) {
    let (g, total, constant) = path_graph(params, problem, path, targets);
    let loss = g.tape.value(total).data[0].f64() + constant;
    (loss, g.tape.backward(total))
}

pub(crate) fn path_pattern<S: Scalar>(
    params: &GuidanceParams<S>,
    problem: &PlanningProblem,
    path: &[crate::env::Config],
    targets: &[f64],
) -> u64 {
    path_graph(params, problem, path, targets).0.tape.branch_pattern()
}
