//! Bidirectional variational autoencoder over neural-architecture DAGs.
//!
//! The crate is organized around a small set of subsystems:
//!
//! * [`graph`] — architecture DAGs, search-space constraints, canonical
//!   labeling, isomorphism testing, enumeration and expansion.
//! * [`diff`] — a minimal reverse-mode differentiation substrate with the
//!   fixed primitive set the model needs, Adam, and a gradient checker.
//! * [`model`] — the two-sided message-passing encoder and the two-sided
//!   sequential decoder.
//! * [`trainer`] — teacher-forced reconstruction + KL training loop.
//! * [`metrics`] — reconstruction accuracy, prior validity / uniqueness /
//!   novelty, and the isomorphism mapping test.
//! * [`predictor`] — latent-space performance regression and ranking.
//! * [`gp`] / [`bo`] — sparse Gaussian-process surrogate, expected
//!   improvement, and the batch optimization loop.
//! * [`synth`] — exactly computable synthetic accuracy oracles.

pub mod bo;
pub mod checkpoint;
pub mod diff;
pub mod gp;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod predictor;
pub mod space;
pub mod synth;
pub mod trainer;
pub mod util;

pub use graph::{ArchGraph, GraphError, ValidityReport};
pub use space::{LabelMode, SearchSpaceSpec};
