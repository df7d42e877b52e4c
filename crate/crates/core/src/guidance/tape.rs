//! Minimal reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its output; `backward` walks the
//! nodes once in reverse insertion order, which is a reverse topological
//! order because inputs always precede their consumers.

use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op<S> {
    Input,
    Param(usize),
    Conv { x: usize, w: usize, b: Option<usize> },
    Dense { x: usize, w: usize, b: usize },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Outer { a: usize, b: usize },
    Concat(Vec<usize>),
    Slice { x: usize, start: usize, len: usize },
    GroupMin { x: usize, k: usize, arg: Vec<u32> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Contract { nu: usize, mu: usize },
    SumSq(usize),
    Scale(usize, S),
    SumAll(Vec<usize>),
}

struct Node<S> {
    op: Op<S>,
    value: Option<Tensor<S>>,
}

pub struct Tape<'p, S: Scalar> {
    params: &'p [Tensor<S>],
    nodes: Vec<Node<S>>,
}

/// Channel count and per-channel volume of a channel-first tensor.
fn split_channels(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p [Tensor<S>]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(k), _) => &self.params[*k],
            (_, Some(t)) => t,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op<S>, value: Option<Tensor<S>>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.push(Op::Input, Some(t))
    }

    pub fn param(&mut self, k: usize) -> Var {
        self.push(Op::Param(k), None)
    }

    /// Zero-padded "same" convolution. `x: [Ci, A, B, C]`,
    /// `w: [Co, Ci, Ka, Kb, Kc]` with odd kernel sizes, `b: [Co]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let out = {
            let xt = self.value(x);
            let wt = self.value(w);
            let bt = b.map(|b| self.value(b));
            conv_forward(xt, wt, bt)
        };
        self.push(
            Op::Conv {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
            Some(out),
        )
    }

    /// `y = W x + b` with `w: [m, n]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = {
            let xt = self.value(x);
            let wt = self.value(w);
            let bt = self.value(b);
            let (m, n) = (wt.shape[0], wt.shape[1]);
            assert_eq!(xt.len(), n, "dense input width");
            let data = (0..m)
                .map(|i| {
                    let row = &wt.data[i * n..(i + 1) * n];
                    bt.data[i] + row.iter().zip(&xt.data).map(|(&a, &b)| a * b).sum::<S>()
                })
                .collect();
            Tensor::from_vec(&[m], data)
        };
        self.push(
            Op::Dense {
                x: x.0,
                w: w.0,
                b: b.0,
            },
            Some(out),
        )
    }

    fn map(&mut self, x: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let t = self.value(x);
        let out = Tensor::from_vec(&t.shape, t.data.iter().map(|&v| f(v)).collect());
        self.push(op, Some(out))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(S::zero()), Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, |v| S::one() / (S::one() + (-v).exp()), Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, |v| v.tanh(), Op::Tanh(x.0))
    }

    /// Softmax over every entry of the tensor.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let max = t.data.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        let e: Vec<S> = t.data.iter().map(|&v| (v - max).exp()).collect();
        let z: S = e.iter().copied().sum();
        let out = Tensor::from_vec(&t.shape, e.into_iter().map(|v| v / z).collect());
        self.push(Op::Softmax(x.0), Some(out))
    }

    /// `a` has a trailing axis of size 1 that is replaced by `b`'s length:
    /// `out[.., l] = a[..] * b[l]`.
    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        let at = self.value(a);
        let bt = self.value(b);
        assert_eq!(*at.shape.last().unwrap(), 1, "outer needs a trailing unit axis");
        let mut shape = at.shape.clone();
        *shape.last_mut().unwrap() = bt.len();
        let mut data = Vec::with_capacity(at.len() * bt.len());
        for &x in &at.data {
            for &y in &bt.data {
                data.push(x * y);
            }
        }
        let out = Tensor::from_vec(&shape, data);
        self.push(Op::Outer { a: a.0, b: b.0 }, Some(out))
    }

    /// Concatenation along the leading (channel) axis.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let first = self.value(xs[0]).shape.clone();
        let mut channels = 0;
        let mut data = Vec::new();
        for &x in xs {
            let t = self.value(x);
            assert_eq!(t.shape[1..], first[1..], "concat spatial shapes differ");
            channels += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = first;
        shape[0] = channels;
        let out = Tensor::from_vec(&shape, data);
        self.push(Op::Concat(xs.iter().map(|v| v.0).collect()), Some(out))
    }

    /// Channels `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (c, vol) = split_channels(&t.shape);
        assert!(start + len <= c, "channel slice out of range");
        let mut shape = t.shape.clone();
        shape[0] = len;
        let out = Tensor::from_vec(&shape, t.data[start * vol..(start + len) * vol].to_vec());
        self.push(Op::Slice { x: x.0, start, len }, Some(out))
    }

    /// Minimum over consecutive groups of `k` channels.
    pub fn group_min(&mut self, x: Var, k: usize) -> Var {
        let t = self.value(x);
        let (c, vol) = split_channels(&t.shape);
        assert!(k >= 1 && c % k == 0, "channel count not divisible by group size");
        let groups = c / k;
        let mut data = vec![S::zero(); groups * vol];
        let mut arg = vec![0u32; groups * vol];
        for g in 0..groups {
            for n in 0..vol {
                let mut best = t.data[g * k * vol + n];
                let mut bi = 0;
                for j in 1..k {
                    let v = t.data[(g * k + j) * vol + n];
                    if v < best {
                        best = v;
                        bi = j;
                    }
                }
                data[g * vol + n] = best;
                arg[g * vol + n] = bi as u32;
            }
        }
        let mut shape = t.shape.clone();
        shape[0] = groups;
        let out = Tensor::from_vec(&shape, data);
        self.push(Op::GroupMin { x: x.0, k, arg }, Some(out))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S, op: Op<S>) -> Var {
        let at = self.value(a);
        let bt = self.value(b);
        assert_eq!(at.len(), bt.len(), "elementwise size mismatch");
        let out = Tensor::from_vec(&at.shape, at.data.iter().zip(&bt.data).map(|(&x, &y)| f(x, y)).collect());
        self.push(op, Some(out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// `psi[k] = sum_n nu[k, n] * mu[n]` with `nu: [p, ...]`, `mu: [1, ...]`.
    pub fn contract(&mut self, nu: Var, mu: Var) -> Var {
        let nt = self.value(nu);
        let mt = self.value(mu);
        let (p, vol) = split_channels(&nt.shape);
        assert_eq!(mt.len(), vol, "attention and latent volumes differ");
        let data = (0..p)
            .map(|k| nt.data[k * vol..(k + 1) * vol].iter().zip(&mt.data).map(|(&a, &b)| a * b).sum())
            .collect();
        let out = Tensor::from_vec(&[p], data);
        self.push(Op::Contract { nu: nu.0, mu: mu.0 }, Some(out))
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum_sq());
        self.push(Op::SumSq(x.0), Some(out))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        self.map(x, |v| v * c, Op::Scale(x.0, c))
    }

    /// Sum of the entries of every listed tensor, as a scalar.
    pub fn sum_all(&mut self, xs: &[Var]) -> Var {
        let mut acc = S::zero();
        for &x in xs {
            for &v in &self.value(x).data {
                acc = acc + v;
            }
        }
        self.push(Op::SumAll(xs.iter().map(|v| v.0).collect()), Some(Tensor::scalar(acc)))
    }

    /// Hash of every piecewise branch taken in the forward pass (relu
    /// signs and group-min winners). Two evaluations with equal patterns
    /// lie on the same smooth piece of the function.
    pub fn branch_pattern(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in &self.value(Var(*x)).data {
                        (*v > S::zero()).hash(&mut h);
                    }
                }
                Op::GroupMin { arg, .. } => arg.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Gradient of the scalar `out` with respect to every parameter tensor.
    pub fn backward(&self, out: Var) -> Vec<Tensor<S>> {
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        grads[out.0] = Some(vec![S::one()]);
        let mut pgrads: Vec<Tensor<S>> = self.params.iter().map(|p| Tensor::zeros(&p.shape)).collect();

        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| self.value(Var(i));
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(k) => {
                    for (a, b) in pgrads[*k].data.iter_mut().zip(&g) {
                        *a = *a + *b;
                    }
                }
                Op::Conv { x, w, b } => {
                    let (gx, gw, gb) = conv_backward(val(*x), val(*w), &g);
                    acc(&mut grads, *x, gx, val(*x).len());
                    acc(&mut grads, *w, gw, val(*w).len());
                    if let Some(b) = b {
                        acc(&mut grads, *b, gb, val(*b).len());
                    }
                }
                Op::Dense { x, w, b } => {
                    let xt = val(*x);
                    let wt = val(*w);
                    let (m, n) = (wt.shape[0], wt.shape[1]);
                    let mut gx = vec![S::zero(); n];
                    let mut gw = vec![S::zero(); m * n];
                    for i in 0..m {
                        let gi = g[i];
                        for j in 0..n {
                            gx[j] = gx[j] + gi * wt.data[i * n + j];
                            gw[i * n + j] = gi * xt.data[j];
                        }
                    }
                    acc(&mut grads, *x, gx, n);
                    acc(&mut grads, *w, gw, m * n);
                    acc(&mut grads, *b, g.clone(), m);
                }
                Op::Relu(x) => {
                    let xt = val(*x);
                    let gx = g
                        .iter()
                        .zip(&xt.data)
                        .map(|(&gv, &xv)| if xv > S::zero() { gv } else { S::zero() })
                        .collect();
                    acc(&mut grads, *x, gx, xt.len());
                }
                Op::Sigmoid(x) => {
                    let y = self.nodes[id].value.as_ref().unwrap();
                    let gx = g.iter().zip(&y.data).map(|(&gv, &yv)| gv * yv * (S::one() - yv)).collect();
                    acc(&mut grads, *x, gx, y.len());
                }
                Op::Tanh(x) => {
                    let y = self.nodes[id].value.as_ref().unwrap();
                    let gx = g.iter().zip(&y.data).map(|(&gv, &yv)| gv * (S::one() - yv * yv)).collect();
                    acc(&mut grads, *x, gx, y.len());
                }
                Op::Softmax(x) => {
                    let y = self.nodes[id].value.as_ref().unwrap();
                    let dot: S = g.iter().zip(&y.data).map(|(&a, &b)| a * b).sum();
                    let gx = g.iter().zip(&y.data).map(|(&gv, &yv)| yv * (gv - dot)).collect();
                    acc(&mut grads, *x, gx, y.len());
                }
                Op::Outer { a, b } => {
                    let at = val(*a);
                    let bt = val(*b);
                    let l = bt.len();
                    let mut ga = vec![S::zero(); at.len()];
                    let mut gb = vec![S::zero(); l];
                    for (n, &av) in at.data.iter().enumerate() {
                        for j in 0..l {
                            let gv = g[n * l + j];
                            ga[n] = ga[n] + gv * bt.data[j];
                            gb[j] = gb[j] + gv * av;
                        }
                    }
                    acc(&mut grads, *a, ga, at.len());
                    acc(&mut grads, *b, gb, l);
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let n = val(x).len();
                        acc(&mut grads, x, g[off..off + n].to_vec(), n);
                        off += n;
                    }
                }
                Op::Slice { x, start, len } => {
                    let xt = val(*x);
                    let (_, vol) = split_channels(&xt.shape);
                    let mut gx = vec![S::zero(); xt.len()];
                    gx[start * vol..(start + len) * vol].copy_from_slice(&g);
                    acc(&mut grads, *x, gx, xt.len());
                }
                Op::GroupMin { x, k, arg } => {
                    let xt = val(*x);
                    let (c, vol) = split_channels(&xt.shape);
                    let mut gx = vec![S::zero(); xt.len()];
                    for gi in 0..c / k {
                        for n in 0..vol {
                            let j = arg[gi * vol + n] as usize;
                            gx[(gi * k + j) * vol + n] = g[gi * vol + n];
                        }
                    }
                    acc(&mut grads, *x, gx, xt.len());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone(), g.len());
                    acc(&mut grads, *b, g, val(*b).len());
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|&v| -v).collect();
                    acc(&mut grads, *a, g, val(*a).len());
                    acc(&mut grads, *b, neg, val(*b).len());
                }
                Op::Mul(a, b) => {
                    let at = val(*a);
                    let bt = val(*b);
                    let ga = g.iter().zip(&bt.data).map(|(&x, &y)| x * y).collect();
                    let gb = g.iter().zip(&at.data).map(|(&x, &y)| x * y).collect();
                    acc(&mut grads, *a, ga, at.len());
                    acc(&mut grads, *b, gb, bt.len());
                }
                Op::Contract { nu, mu } => {
                    let nt = val(*nu);
                    let mt = val(*mu);
                    let (p, vol) = split_channels(&nt.shape);
                    let mut gn = vec![S::zero(); nt.len()];
                    let mut gm = vec![S::zero(); vol];
                    for k in 0..p {
                        let gk = g[k];
                        for n in 0..vol {
                            gn[k * vol + n] = gk * mt.data[n];
                            gm[n] = gm[n] + gk * nt.data[k * vol + n];
                        }
                    }
                    acc(&mut grads, *nu, gn, nt.len());
                    acc(&mut grads, *mu, gm, vol);
                }
                Op::SumSq(x) => {
                    let xt = val(*x);
                    let two = S::of(2.0) * g[0];
                    let gx = xt.data.iter().map(|&v| two * v).collect();
                    acc(&mut grads, *x, gx, xt.len());
                }
                Op::Scale(x, c) => {
                    let gx = g.iter().map(|&v| v * *c).collect();
                    acc(&mut grads, *x, gx, g.len());
                }
                Op::SumAll(xs) => {
                    for &x in xs {
                        let n = val(x).len();
                        acc(&mut grads, x, vec![g[0]; n], n);
                    }
                }
            }
        }
        pgrads
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Vec<S>>], id: usize, g: Vec<S>, len: usize) {
    debug_assert_eq!(g.len(), len);
    match &mut grads[id] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a = *a + *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

struct ConvDims {
    ci: usize,
    co: usize,
    dims: [usize; 3],
    k: [usize; 3],
}

fn conv_dims<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>) -> ConvDims {
    assert_eq!(x.shape.len(), 4, "conv input must be [C, A, B, C]");
    assert_eq!(w.shape.len(), 5, "conv kernel must be [Co, Ci, Ka, Kb, Kc]");
    assert_eq!(x.shape[0], w.shape[1], "conv channel mismatch");
    let k = [w.shape[2], w.shape[3], w.shape[4]];
    assert!(k.iter().all(|v| v % 2 == 1), "conv kernel sizes must be odd");
    ConvDims {
        ci: x.shape[0],
        co: w.shape[0],
        dims: [x.shape[1], x.shape[2], x.shape[3]],
        k,
    }
}

/// Output index range `lo..hi` for which `o + off` stays inside `0..n`.
fn valid(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// Visits every (output channel, input channel, kernel tap) with the
/// matching flat offsets of aligned output/input rows.
fn for_each_tap(cd: &ConvDims, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    let [a, b, c] = cd.dims;
    let vol = a * b * c;
    for o in 0..cd.co {
        for i in 0..cd.ci {
            for ka in 0..cd.k[0] {
                let oa = ka as isize - (cd.k[0] / 2) as isize;
                let (a0, a1) = valid(a, oa);
                for kb in 0..cd.k[1] {
                    let ob = kb as isize - (cd.k[1] / 2) as isize;
                    let (b0, b1) = valid(b, ob);
                    for kc in 0..cd.k[2] {
                        let oc = kc as isize - (cd.k[2] / 2) as isize;
                        let (c0, c1) = valid(c, oc);
                        if c0 >= c1 || b0 >= b1 {
                            continue;
                        }
                        let widx = (((o * cd.ci + i) * cd.k[0] + ka) * cd.k[1] + kb) * cd.k[2] + kc;
                        if oc == 0 {
                            // whole rows along the last axis: runs over b are contiguous
                            if ob == 0 {
                                let n = (a1 - a0) * vol / a;
                                let in_at = i * vol + ((a0 as isize + oa) as usize) * b * c;
                                f(widx, o * vol + a0 * b * c, in_at, n, o, i);
                                continue;
                            }
                            for pa in a0..a1 {
                                let out_at = o * vol + (pa * b + b0) * c;
                                let in_at =
                                    i * vol + (((pa as isize + oa) as usize) * b + (b0 as isize + ob) as usize) * c;
                                f(widx, out_at, in_at, (b1 - b0) * c, o, i);
                            }
                            continue;
                        }
                        for pa in a0..a1 {
                            for pb in b0..b1 {
                                let out_row = o * vol + (pa * b + pb) * c;
                                let in_row = i * vol
                                    + (((pa as isize + oa) as usize) * b + (pb as isize + ob) as usize) * c;
                                f(widx, out_row + c0, ((in_row + c0) as isize + oc) as usize, c1 - c0, o, i);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: Option<&Tensor<S>>) -> Tensor<S> {
    let cd = conv_dims(x, w);
    let vol: usize = cd.dims.iter().product();
    let mut out = vec![S::zero(); cd.co * vol];
    if let Some(b) = b {
        for o in 0..cd.co {
            out[o * vol..(o + 1) * vol].fill(b.data[o]);
        }
    }
    for_each_tap(&cd, |widx, out_at, in_at, n, _, _| {
        let wv = w.data[widx];
        for (y, &xv) in out[out_at..out_at + n].iter_mut().zip(&x.data[in_at..in_at + n]) {
            *y = *y + wv * xv;
        }
    });
    let mut shape = x.shape.clone();
    shape[0] = cd.co;
    Tensor::from_vec(&shape, out)
}

fn conv_backward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, g: &[S]) -> (Vec<S>, Vec<S>, Vec<S>) {
    let cd = conv_dims(x, w);
    let vol: usize = cd.dims.iter().product();
    let mut gx = vec![S::zero(); x.len()];
    let mut gw = vec![S::zero(); w.len()];
    let gb = (0..cd.co).map(|o| g[o * vol..(o + 1) * vol].iter().copied().sum()).collect();
    for_each_tap(&cd, |widx, out_at, in_at, n, _, _| {
        let wv = w.data[widx];
        let gs = &g[out_at..out_at + n];
        let mut dw = S::zero();
        for ((gxv, &xv), &gv) in gx[in_at..in_at + n].iter_mut().zip(&x.data[in_at..in_at + n]).zip(gs) {
            *gxv = *gxv + wv * gv;
            dw = dw + gv * xv;
        }
        gw[widx] = gw[widx] + dw;
    });
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight loop-nest convolution used as an oracle.
    fn conv_naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (ci, a, bb, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (co, ka, kb, kc) = (w.shape[0], w.shape[2], w.shape[3], w.shape[4]);
        let mut out = Tensor::zeros(&[co, a, bb, c]);
        for o in 0..co {
            for i0 in 0..a {
                for j0 in 0..bb {
                    for l0 in 0..c {
                        let mut s = b.data[o];
                        for i in 0..ci {
                            for u in 0..ka {
                                for v in 0..kb {
                                    for t in 0..kc {
                                        let (p, q, r) = (
                                            i0 as isize + u as isize - (ka / 2) as isize,
                                            j0 as isize + v as isize - (kb / 2) as isize,
                                            l0 as isize + t as isize - (kc / 2) as isize,
                                        );
                                        if p < 0 || q < 0 || r < 0 || p >= a as isize || q >= bb as isize || r >= c as isize {
                                            continue;
                                        }
                                        let xv = x.data[((i * a + p as usize) * bb + q as usize) * c + r as usize];
                                        let wv = w.data[(((o * ci + i) * ka + u) * kb + v) * kc + t];
                                        s += xv * wv;
                                    }
                                }
                            }
                        }
                        out.data[((o * a + i0) * bb + j0) * c + l0] = s;
                    }
                }
            }
        }
        out
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_tensor(shape: &[usize], seed: &mut u64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| lcg(seed)).collect())
    }

    #[test]
    fn conv_matches_loop_nest() {
        let mut seed = 5;
        for (shape, k) in [([2, 4, 5, 3], [3, 3, 3]), ([3, 5, 5, 1], [3, 3, 1]), ([4, 3, 3, 2], [1, 1, 1])] {
            let x = rand_tensor(&shape, &mut seed);
            let w = rand_tensor(&[3, shape[0], k[0], k[1], k[2]], &mut seed);
            let b = rand_tensor(&[3], &mut seed);
            let fast = conv_forward(&x, &w, Some(&b));
            let slow = conv_naive(&x, &w, &b);
            for (p, q) in fast.data.iter().zip(&slow.data) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    /// Finite-difference check of one composite expression touching every op.
    #[test]
    fn every_op_has_consistent_gradient() {
        let mut seed = 9;
        let params = vec![
            rand_tensor(&[4, 2, 3, 3, 1], &mut seed),
            rand_tensor(&[4], &mut seed),
            rand_tensor(&[3, 2], &mut seed),
            rand_tensor(&[3], &mut seed),
            rand_tensor(&[1, 3, 3, 1], &mut seed),
        ];
        let x = rand_tensor(&[2, 3, 3, 1], &mut seed);
        let f = |ps: &[Tensor<f64>], grad: bool| {
            let mut t = Tape::new(ps);
            let xi = t.input(x.clone());
            let (w, b, dw, db, lg) = (t.param(0), t.param(1), t.param(2), t.param(3), t.param(4));
            let h = t.conv(xi, w, Some(b));
            let s = t.sigmoid(h);
            let m = t.group_min(s, 2);
            let a = t.slice(m, 0, 1);
            let th = t.tanh(a);
            let r = t.relu(h);
            let rs = t.slice(r, 1, 2);
            let c = t.concat(&[th, rs]);
            let sm = t.softmax(lg);
            let two = t.input(Tensor::from_vec(&[2], vec![0.3, -0.7]));
            let out = t.outer(sm, two);
            let e = t.slice(c, 0, 2);
            let prod = t.mul(e, out);
            let psi = t.contract(c, sm);
            let dense_in = t.slice(psi, 0, 2);
            let dd = t.dense(dense_in, dw, db);
            let target = t.input(Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]));
            let diff = t.sub(dd, target);
            let sq = t.sum_sq(diff);
            let scaled = t.scale(sq, 0.5);
            let added = t.add(prod, prod);
            let total = t.sum_all(&[scaled, added]);
            let v = t.value(total).data[0];
            (v, if grad { t.backward(total) } else { Vec::new() })
        };
        let (_, g) = f(&params, true);
        let h = 1e-6;
        for k in 0..params.len() {
            for n in 0..params[k].len() {
                let mut up = params.clone();
                up[k].data[n] += h;
                let mut dn = params.clone();
                dn[k].data[n] -= h;
                let fd = (f(&up, false).0 - f(&dn, false).0) / (2.0 * h);
                let an = g[k].data[n];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "param {k}[{n}]: {an} vs {fd}");
            }
        }
    }
}
