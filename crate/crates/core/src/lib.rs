//! Exact piecewise-linear geometry of bias-free ReLU networks along linear
//! input paths.
//!
//! Between two inputs `x0` and `x1` the network output restricted to
//! `X(t) = (1 - t) x0 + t x1` is piecewise linear. [`pathwalk`] enumerates
//! every break point (node) exactly by walking activation regions, computes
//! the constant directional gradient on each segment from the product of
//! weight and indicator matrices, and returns the gradient gaps at the nodes.
//! [`stats`] models the gradient sequence as a random walk bridge and
//! provides the node-count, gap-variance, deflection and pair margin /
//! fluctuation measurements. [`train`] trains the same networks with
//! minibatch SGD on cross-entropy, and [`data`] reads MNIST and CIFAR-10.
//!
//! All arithmetic is `f64`. Batch workloads (Monte Carlo trials, pairs) go
//! through [`exec::Execution`], which uses rayon when the `parallel` feature
//! is enabled and is deterministic either way.

pub mod data;
pub mod error;
pub mod exec;
pub mod network;
pub mod pathwalk;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
pub use network::{
    he_init, normalize_output, ActivationPattern, Architecture, LayerGraph, OutputVector,
};

pub use pathwalk::{walk_path, walk_path_with, LinearPath, OutputScale, PathProfile, WalkOptions};
