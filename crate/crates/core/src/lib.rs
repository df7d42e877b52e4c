//! Neural exploration-exploitation trees for sampling-based motion planning.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: procedural workspaces (mazes, cuboid fields), robot geometry,
//!   collision checking and path costs.
//! - [`tree`]: the tree-based sampling template with RRT, EST and RRT*
//!   rewiring operators.
//! - [`ucb`]: kernel-smoothing and Gaussian-process upper confidence scores
//!   over a growing history of selected nodes.
//! - [`guidance`]: the attention-embedding / neural value iteration network
//!   together with the small reverse-mode tape used to train it.
//! - [`msil`]: the guided progressive expansion operator and the
//!   self-improving training loop.
//! - [`bench`]: benchmark harness, normalisation, CSV and SVG output.

pub mod bench;
pub mod env;
pub mod error;
pub mod guidance;
pub mod msil;
pub mod rng;
pub mod tree;
pub mod ucb;

pub use error::{Error, Result};
