//! Minimal reverse-mode differentiation substrate.
//!
//! A [`Tape`] records a fixed set of dense matrix primitives; [`backward`]
//! traverses the recording once and accumulates gradients into the leaves.
//! [`ParamRegistry`] owns all learnable weights together with Adam state.

mod gradcheck;
mod nn;
mod pca;
mod registry;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use nn::{fc2_relu, gru_cell, linear, GruWeights};
pub use pca::{pca_project, PcaResult};
pub use registry::{ParamId, ParamRegistry};
pub use tape::{sigmoid_scalar, Gradients, Id, Tape};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DiffError {
    #[error("backward already consumed this tape")]
    GraphConsumed,
    #[error("loss is not connected to any parameter requiring gradients")]
    DetachedLoss,
    #[error("loss must be a 1x1 scalar, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("no gradients accumulated since the last optimizer step")]
    MissingGrad,
    #[error("requested principal components have variance below threshold")]
    DegenerateSpread,
}
