use crate::error::{invalid, Error, Result};
use crate::guidance::{GuidanceParams, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Heavy-ball momentum.
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::sgd()),
            "adam" => Ok(Self::adam()),
            _ => Err(invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// First-order optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Rescale the whole gradient to at most this Euclidean norm.
    pub clip_norm: Option<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            clip_norm: None,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<S: Scalar>(&mut self, params: &mut GuidanceParams<S>, grads: &[Tensor<S>]) {
        let tensors = params.tensors_mut();
        assert_eq!(tensors.len(), grads.len(), "one gradient per tensor");
        if self.m.is_empty() {
            self.m = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let lr = self.lr;
        let norm = grads.iter().map(|g| g.sum_sq().f64()).sum::<f64>().sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for (k, (w, g)) in tensors.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    for ((w, g), m) in w.data.iter_mut().zip(&g.data).zip(m.iter_mut()) {
                        *m = momentum * *m + scale * g.f64();
                        *w = S::of(w.f64() - lr * *m);
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.t as i32);
                    let c2 = 1.0 - beta2.powi(self.t as i32);
                    for (((w, g), m), v) in w.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = scale * g.f64();
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w = S::of(w.f64() - lr * (*m / c1) / ((*v / c2).sqrt() + eps));
                    }
                }
            }
        }
    }
}
