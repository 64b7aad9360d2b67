//! Bias-free ReLU networks: layers, seeded He initialization, forward
//! evaluation, activation-pattern capture and fixed-pattern (linearized)
//! evaluation.

mod graph;
mod init;
mod layer;
mod output;
mod pattern;

pub(crate) use graph::Trace;
pub use graph::{Layer, LayerGraph, Residual};
pub use init::{he_init, Architecture, LayerSpec};
pub use layer::{Affine, Conv2d, Dense, Shape3};
pub use output::{normalize_output, OutputVector};
pub use pattern::{ActivationPattern, UnitId};
