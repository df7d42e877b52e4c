use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::env::RobotKind;
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Width of the hidden spatial-attention convolutions.
pub const SPATIAL_WIDTH: usize = 32;
/// Width of the hidden layer in the value and policy heads.
pub const HEAD_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Convolution followed by a channel-group minimum.
    MinPool,
    /// One LSTM step per iteration, shared over all latent cells.
    Lstm,
}

impl std::str::FromStr for CellKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minpool" => Ok(CellKind::MinPool),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(invalid(format!("unknown cell kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    /// Side of the latent grid.
    pub d: usize,
    /// Hidden width of the configuration branch and of the LSTM cell.
    pub d_e: usize,
    /// Latent discretisation of the non-planar coordinates.
    pub d_a: usize,
    /// Channels of the latent value tensor.
    pub p: usize,
    pub k_w: usize,
    pub k_h: usize,
    pub t_vi: usize,
    /// Channels per min-pool group.
    pub k_a: usize,
    pub q: usize,
    pub robot: RobotKind,
    pub sigma_policy: f64,
    pub cell: CellKind,
}

impl Hyper {
    pub fn for_robot(robot: RobotKind, eta: f64) -> Self {
        let q = robot.dof();
        Hyper {
            d: 15,
            d_e: 64,
            // nothing to discretise for a point robot
            d_a: if q > 2 { 8 } else { 1 },
            p: 8,
            k_w: 3,
            k_h: 2,
            t_vi: 30,
            k_a: 4,
            q,
            robot,
            sigma_policy: 0.5 * eta,
            cell: CellKind::MinPool,
        }
    }

    /// Input width of the configuration branch: everything except the two
    /// planar workspace coordinates.
    pub fn config_dim(&self) -> usize {
        self.q - 2
    }

    pub fn map_channels(&self) -> usize {
        if self.robot.workspace_dim() == 3 {
            2
        } else {
            1
        }
    }

    /// Kernel extent along the latent `d_a` axis.
    pub fn kernel_depth(&self) -> usize {
        if self.d_a > 1 {
            3
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("d_e", self.d_e),
            ("d_a", self.d_a),
            ("p", self.p),
            ("k_w", self.k_w),
            ("k_h", self.k_h),
            ("k_a", self.k_a),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid(format!("hyper-parameter {name} must be positive")));
            }
        }
        if self.q != self.robot.dof() {
            return Err(invalid(format!(
                "q = {} does not match robot {} with {} degrees of freedom",
                self.q,
                self.robot,
                self.robot.dof()
            )));
        }
        if !(self.sigma_policy >= 0.0 && self.sigma_policy.is_finite()) {
            return Err(invalid("policy standard deviation must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Index of each layer's tensors inside [`GuidanceParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub spatial: Vec<(usize, usize)>,
    pub config: Vec<(usize, usize)>,
    pub w0: (usize, usize),
    /// Min-pool: `[w, b]`. LSTM: `[conv w, conv b, gate w, gate b, proj w, proj b]`.
    pub w1: Vec<usize>,
    pub w2: [(usize, usize); 2],
    pub w3: [(usize, usize); 2],
    pub shapes: Vec<Vec<usize>>,
}

impl Layout {
    pub fn new(h: &Hyper) -> Self {
        let mut shapes: Vec<Vec<usize>> = Vec::new();
        let mut add = |shape: Vec<usize>| {
            shapes.push(shape);
            shapes.len() - 1
        };
        let kd = h.kernel_depth();

        let mut spatial = Vec::new();
        let mut cin = 4;
        for i in 0..h.k_w {
            let cout = if i + 1 == h.k_w { 1 } else { SPATIAL_WIDTH };
            spatial.push((add(vec![cout, cin, 1, 1, 1]), add(vec![cout])));
            cin = cout;
        }
        let mut config = Vec::new();
        let mut nin = h.config_dim();
        for i in 0..h.k_h {
            let nout = if i + 1 == h.k_h { h.d_a } else { h.d_e };
            config.push((add(vec![nout, nin]), add(vec![nout])));
            nin = nout;
        }
        let width = match h.cell {
            CellKind::MinPool => h.p,
            CellKind::Lstm => h.d_e,
        };
        let w0 = (
            add(vec![width + 1, 1 + h.map_channels(), 3, 3, kd]),
            add(vec![width + 1]),
        );
        let w1 = match h.cell {
            CellKind::MinPool => vec![add(vec![h.p * h.k_a, h.p + 1, 3, 3, kd]), add(vec![h.p * h.k_a])],
            CellKind::Lstm => vec![
                add(vec![h.d_e, h.d_e + 1, 3, 3, kd]),
                add(vec![h.d_e]),
                add(vec![4 * h.d_e, 2 * h.d_e, 1, 1, 1]),
                add(vec![4 * h.d_e]),
                add(vec![h.p, h.d_e, 1, 1, 1]),
                add(vec![h.p]),
            ],
        };
        let w2 = [
            (add(vec![HEAD_WIDTH, h.p]), add(vec![HEAD_WIDTH])),
            (add(vec![1, HEAD_WIDTH]), add(vec![1])),
        ];
        let w3 = [
            (add(vec![HEAD_WIDTH, h.p]), add(vec![HEAD_WIDTH])),
            (add(vec![h.q, HEAD_WIDTH]), add(vec![h.q])),
        ];
        Layout {
            spatial,
            config,
            w0,
            w1,
            w2,
            w3,
            shapes,
        }
    }

    /// Indices of weight (not bias) tensors.
    pub fn is_weight(&self, k: usize) -> bool {
        self.shapes[k].len() > 1
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// All learnable tensors of the guidance network.
///
/// Every distinct parameter state carries its own `version`, so cached
/// latent values keyed by version never go stale.
#[derive(Debug, Clone)]
pub struct GuidanceParams<S = f32> {
    hyper: Hyper,
    layout: Layout,
    tensors: Vec<Tensor<S>>,
    version: u64,
}

impl Hyper {
    /// `sigma_policy` rounded to the 32-bit value a checkpoint keeps.
    fn stored(mut self) -> Self {
        self.sigma_policy = self.sigma_policy as f32 as f64;
        self
    }
}

impl<S: Scalar> PartialEq for GuidanceParams<S> {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper && self.tensors == other.tensors
    }
}

impl<S: Scalar> GuidanceParams<S> {
    pub fn zeros(hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        let hyper = hyper.stored();
        let layout = Layout::new(&hyper);
        let tensors = layout.shapes.iter().map(|s| Tensor::zeros(s)).collect();
        Ok(GuidanceParams {
            hyper,
            layout,
            tensors,
            version: fresh_version(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(hyper)?;
        let mut rng = rng_from_seed(seed);
        for (k, t) in p.tensors.iter_mut().enumerate() {
            if !p.layout.is_weight(k) {
                continue;
            }
            let receptive: usize = t.shape[2..].iter().product();
            let fan_in = t.shape[1] * receptive;
            let fan_out = t.shape[0] * receptive;
            let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for v in t.data.iter_mut() {
                *v = S::of(rng.random_range(-a..=a));
            }
        }
        Ok(p)
    }

    /// Builds a parameter set from explicit tensors (shapes must match the
    /// layout implied by `hyper`).
    pub fn from_tensors(hyper: Hyper, tensors: Vec<Tensor<S>>) -> Result<Self> {
        hyper.validate()?;
        let hyper = hyper.stored();
        let layout = Layout::new(&hyper);
        if tensors.len() != layout.shapes.len() {
            return Err(invalid(format!(
                "expected {} parameter tensors, got {}",
                layout.shapes.len(),
                tensors.len()
            )));
        }
        for (k, (t, s)) in tensors.iter().zip(&layout.shapes).enumerate() {
            if &t.shape != s {
                return Err(invalid(format!("tensor {k} has shape {:?}, expected {s:?}", t.shape)));
            }
            if !t.all_finite() {
                return Err(invalid(format!("tensor {k} has non-finite entries")));
            }
        }
        Ok(GuidanceParams {
            hyper,
            layout,
            tensors,
            version: fresh_version(),
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access; the version is bumped so caches see a new state.
    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        self.version = fresh_version();
        &mut self.tensors
    }

    pub fn set_sigma_policy(&mut self, sigma: f64) {
        self.hyper.sigma_policy = sigma as f32 as f64;
        self.version = fresh_version();
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }

    pub fn cast<T: Scalar>(&self) -> GuidanceParams<T> {
        GuidanceParams {
            hyper: self.hyper.clone(),
            layout: self.layout.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            version: fresh_version(),
        }
    }
}
